#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "M2DN" | u32 version
//   per parameter, lexicographic path order:
//     u32 path length | UTF-8 path | u32 rank | u32 dims[rank] | f64 values
//   u32 length | UTF-8 JSON {"step": ..., "history": [...]}

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2dan/training.hpp"

namespace m2dan {

inline constexpr char kCheckpointMagic[4] = {'M', '2', 'D', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, "checkpoint truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const TrainState& state) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  for (const auto& [path, t] : state.model.params) {
    w.u32(static_cast<std::uint32_t>(path.size()));
    w.bytes(path);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data) w.f64(v);
  }
  nlohmann::ordered_json j;
  j["step"] = state.step;
  j["history"] = history_to_json(state.history);
  const std::string text = j.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  return w.data();
}

inline void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

// Parameters must match `spec` path by path and shape by shape.
inline TrainState decode_checkpoint(std::vector<char> bytes, const ModelSpec& spec) {
  detail::ByteReader r(std::move(bytes));
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4)) throw Error(ErrorCode::CorruptFile, "bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(v));
  TrainState state;
  state.model = build_model(spec, 0);
  for (auto& [path, t] : state.model.params) {
    const auto len = r.u32();
    if (len > 4096) throw Error(ErrorCode::CorruptFile, "implausible path length");
    const auto got = r.bytes(len);
    if (got != path) throw Error(ErrorCode::SpecMismatch, "expected parameter " + path + ", found " + got);
    const auto rank = r.u32();
    if (rank > 8) throw Error(ErrorCode::CorruptFile, "implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape)
      throw Error(ErrorCode::SpecMismatch, path + " has shape " + shape_str(shape) + ", model expects " + shape_str(t.shape));
    for (auto& v : t.data) v = r.f64();
  }
  const auto len = r.u32();
  const auto text = r.bytes(len);
  if (!r.at_end()) throw Error(ErrorCode::CorruptFile, "trailing bytes after history block");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    state.step = j.at("step").get<std::size_t>();
    state.history = history_from_json(j.at("history"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("history block: ") + e.what());
  }
  return state;
}

inline TrainState load_checkpoint(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes), spec);
}

}  // namespace m2dan
