#pragma once

// Multi-domain image data: a synthetic anterior-chamber-angle generator with
// per-domain acquisition shifts, PGM dataset directories, and the mixed-domain
// batch sampler.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "m2dan/tensor.hpp"

namespace m2dan {

inline constexpr std::size_t kNarrow = 0;  // class index of the clinically positive minority
inline constexpr std::size_t kOpen = 1;
inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::array<const char*, 2> kClassNames{"narrow", "open"};

struct DomainSpec {
  std::string name;
  double noise_std = 0.0;
  double salt_pepper_frac = 0.0;
  std::size_t blur_radius = 0;  // number of 3x3 box-blur passes
  double contrast = 1.0;
  double resolution_scale = 1.0;
  double narrow_frac = 0.5;
  std::size_t n_train = 0;
  std::size_t n_test = 0;

  void validate() const {
    auto bad = [&](const char* what) { throw Error(ErrorCode::InvalidSpec, name + ": " + what); };
    if (!(noise_std >= 0)) bad("noise_std must be >= 0");
    if (!(salt_pepper_frac >= 0 && salt_pepper_frac <= 1)) bad("salt_pepper_frac must be in [0,1]");
    if (!(contrast > 0)) bad("contrast must be > 0");
    if (!(resolution_scale > 0 && resolution_scale <= 1)) bad("resolution_scale must be in (0,1]");
    if (!(narrow_frac > 0 && narrow_frac < 1)) bad("narrow_frac must be in (0,1)");
  }

  std::size_t narrow_count(std::size_t n) const { return static_cast<std::size_t>(std::llround(narrow_frac * n)); }
};

struct DomainSample {
  Tensor image;                             // [1, H, W], values in [0, 1]
  std::optional<std::size_t> class_label;   // kNarrow / kOpen; absent for target training data
  std::size_t domain_index = 0;
};

struct DomainData {
  std::string name;
  std::vector<DomainSample> train;
  std::vector<DomainSample> test;
};

// Index 0 is always the labeled source domain.
struct Benchmark {
  std::vector<DomainData> domains;
  std::size_t image_size = 64;

  std::size_t num_domains() const { return domains.size(); }
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

inline std::uint64_t hash_name(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

using Image = std::vector<double>;  // row-major, size*size

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// Two anti-aliased 2px rays from an apex left of centre, opening to the right.
inline Image render_wedge(std::size_t size, double opening_deg, std::mt19937_64& rng) {
  const double S = static_cast<double>(size);
  std::uniform_real_distribution<double> jitter(-S / 16.0, S / 16.0);
  std::uniform_real_distribution<double> tilt(-5.0, 5.0);
  const double ax = 0.3 * S + jitter(rng);
  const double ay = 0.5 * S + jitter(rng);
  const double axis = tilt(rng) * std::numbers::pi / 180.0;
  const double half = 0.5 * opening_deg * std::numbers::pi / 180.0;
  const double dirs[2][2] = {{std::cos(axis - half), std::sin(axis - half)},
                             {std::cos(axis + half), std::sin(axis + half)}};
  Image img(size * size, 0.0);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5 - ax;
      const double py = static_cast<double>(y) + 0.5 - ay;
      double v = 0.0;
      for (const auto& u : dirs) {
        const double along = px * u[0] + py * u[1];
        const double dist = along < 0.0 ? std::hypot(px, py) : std::abs(px * u[1] - py * u[0]);
        v = std::max(v, std::clamp(1.5 - dist, 0.0, 1.0));
      }
      img[y * size + x] = v;
    }
  return img;
}

inline void box_blur(Image& img, std::size_t size) {
  Image out(img.size());
  const auto S = static_cast<std::ptrdiff_t>(size);
  auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, S - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, S - 1);
    return img[static_cast<std::size_t>(y * S + x)];
  };
  for (std::ptrdiff_t y = 0; y < S; ++y)
    for (std::ptrdiff_t x = 0; x < S; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) acc += at(y + dy, x + dx);
      out[static_cast<std::size_t>(y * S + x)] = acc / 9.0;
    }
  img = std::move(out);
}

// Block-average down by round(1/scale), nearest-neighbour back up.
inline void degrade_resolution(Image& img, std::size_t size, double scale) {
  const auto f = static_cast<std::size_t>(std::max(1LL, std::llround(1.0 / scale)));
  if (f == 1) return;
  for (std::size_t by = 0; by < size; by += f)
    for (std::size_t bx = 0; bx < size; bx += f) {
      const std::size_t ey = std::min(size, by + f), ex = std::min(size, bx + f);
      double acc = 0.0;
      for (std::size_t y = by; y < ey; ++y)
        for (std::size_t x = bx; x < ex; ++x) acc += img[y * size + x];
      acc /= static_cast<double>((ey - by) * (ex - bx));
      for (std::size_t y = by; y < ey; ++y)
        for (std::size_t x = bx; x < ex; ++x) img[y * size + x] = acc;
    }
}

}  // namespace detail

// Renders one image of the given class under the domain's acquisition chain:
// contrast, blur, resolution loss, Gaussian noise, salt-and-pepper, then 8-bit
// quantisation.
inline Tensor render_sample(const DomainSpec& spec, std::size_t size, std::size_t class_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> open_angle(25.0, 55.0);
  std::uniform_real_distribution<double> narrow_angle(5.0, 15.0);
  const double angle = class_label == kNarrow ? narrow_angle(rng) : open_angle(rng);
  auto img = detail::render_wedge(size, angle, rng);

  if (spec.contrast != 1.0)
    for (auto& v : img) v = std::clamp(0.5 + spec.contrast * (v - 0.5), 0.0, 1.0);
  for (std::size_t p = 0; p < spec.blur_radius; ++p) detail::box_blur(img, size);
  detail::degrade_resolution(img, size, spec.resolution_scale);
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& v : img) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  if (spec.salt_pepper_frac > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img) {
      const double r = u(rng);
      if (r < spec.salt_pepper_frac) v = r < 0.5 * spec.salt_pepper_frac ? 0.0 : 1.0;
    }
  }
  for (auto& v : img) v = detail::quantize8(v);
  return Tensor::build({1, size, size}, std::move(img));
}

// Generates labeled train and test splits. The first round(narrow_frac * n)
// samples of each split are narrow, the rest open.
inline DomainData gen_synthetic_domain(const DomainSpec& spec, std::size_t image_size, std::uint64_t seed,
                                       std::size_t domain_index = 0) {
  spec.validate();
  if (image_size == 0) throw Error(ErrorCode::InvalidSpec, "image size must be positive");
  DomainData out;
  out.name = spec.name;
  const auto salt = detail::hash_name(spec.name);
  auto make = [&](std::size_t n, std::uint64_t split, std::vector<DomainSample>& dst) {
    const std::size_t narrow = spec.narrow_count(n);
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = i < narrow ? kNarrow : kOpen;
      auto img = render_sample(spec, image_size, label, detail::mix_seed({seed, salt, split, i}));
      dst.push_back(DomainSample{std::move(img), label, domain_index});
    }
  };
  make(spec.n_train, 0, out.train);
  make(spec.n_test, 1, out.test);
  return out;
}

// Per-domain sample counts of the reference AS-OCT statistics (narrow, total)
// for train and test, in the order source, target I, target II.
struct ReferenceCounts {
  std::size_t train_narrow, train_total, test_narrow, test_total;
};
inline constexpr std::array<ReferenceCounts, 3> kReferenceCounts{{
    {3006, 9030, 790, 2202},
    {62, 526, 64, 526},
    {416, 1822, 418, 1824},
}};

inline constexpr double kDefaultScaleFraction = 1.0 / 6.0;

// Acquisition shifts of the three synthetic domains: a clean source, a noisy
// low-resolution device, and a blurred low-contrast site.
inline std::array<DomainSpec, 3> benchmark_domain_specs(double fraction = kDefaultScaleFraction) {
  std::array<DomainSpec, 3> specs;
  specs[0].name = "source";
  specs[1].name = "target1";
  specs[1].salt_pepper_frac = 0.10;
  specs[1].resolution_scale = 0.5;
  specs[2].name = "target2";
  specs[2].blur_radius = 2;
  specs[2].contrast = 0.5;
  for (std::size_t d = 0; d < 3; ++d) {
    const auto& r = kReferenceCounts[d];
    specs[d].narrow_frac = static_cast<double>(r.train_narrow) / static_cast<double>(r.train_total);
    specs[d].n_train = static_cast<std::size_t>(std::llround(fraction * r.train_total));
    specs[d].n_test = static_cast<std::size_t>(std::llround(fraction * r.test_total));
    if (specs[d].n_train == 0 || specs[d].n_test == 0)
      throw Error(ErrorCode::InvalidSpec, "scale fraction too small");
  }
  return specs;
}

inline void strip_target_train_labels(Benchmark& b) {
  for (std::size_t d = 1; d < b.domains.size(); ++d)
    for (auto& s : b.domains[d].train) s.class_label.reset();
}

// Source + two targets at `fraction` of the reference dataset size. Target
// training samples carry no class label.
inline Benchmark default_benchmark(std::uint64_t seed, std::size_t image_size = 64,
                                   double fraction = kDefaultScaleFraction) {
  Benchmark b;
  b.image_size = image_size;
  const auto specs = benchmark_domain_specs(fraction);
  for (std::size_t d = 0; d < specs.size(); ++d) b.domains.push_back(gen_synthetic_domain(specs[d], image_size, seed, d));
  strip_target_train_labels(b);
  return b;
}

// ---------------------------------------------------------------------------
// Binary (P5) 8-bit PGM.

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<double> pixels;  // row-major, in [0,1]
};

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  auto bad = [&](const std::string& why) { throw Error(ErrorCode::MalformedPgm, path.string() + ": " + why); };
  auto skip_ws = [&] {
    while (true) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        in.get();
      } else {
        return;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_ws();
    std::size_t v = 0;
    int digits = 0;
    while (std::isdigit(in.peek())) {
      v = v * 10 + static_cast<std::size_t>(in.get() - '0');
      if (++digits > 9) bad("header value too large");
    }
    if (digits == 0) bad("expected a number in header");
    return v;
  };
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') bad("not a binary P5 file");
  GrayImage img;
  img.width = read_uint();
  img.height = read_uint();
  const std::size_t maxval = read_uint();
  if (img.width == 0 || img.height == 0) bad("zero dimension");
  if (maxval != 255) bad("only 8-bit (maxval 255) images are supported");
  const int sep = in.get();
  if (sep != ' ' && sep != '\n' && sep != '\t' && sep != '\r') bad("missing separator after header");
  std::vector<unsigned char> raw(img.width * img.height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) bad("truncated pixel data");
  img.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

inline void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
                      std::span<const double> pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> raw(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

// Bilinear resample with pixel-centre alignment; identity when sizes agree.
inline std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t sw, std::size_t sh,
                                           std::size_t dw, std::size_t dh) {
  if (sw == dw && sh == dh) return src;
  std::vector<double> dst(dw * dh);
  const double fx = static_cast<double>(sw) / static_cast<double>(dw);
  const double fy = static_cast<double>(sh) / static_cast<double>(dh);
  for (std::size_t y = 0; y < dh; ++y) {
    const double syf = std::clamp((static_cast<double>(y) + 0.5) * fy - 0.5, 0.0, static_cast<double>(sh - 1));
    const auto y0 = static_cast<std::size_t>(syf);
    const std::size_t y1 = std::min(y0 + 1, sh - 1);
    const double wy = syf - static_cast<double>(y0);
    for (std::size_t x = 0; x < dw; ++x) {
      const double sxf = std::clamp((static_cast<double>(x) + 0.5) * fx - 0.5, 0.0, static_cast<double>(sw - 1));
      const auto x0 = static_cast<std::size_t>(sxf);
      const std::size_t x1 = std::min(x0 + 1, sw - 1);
      const double wx = sxf - static_cast<double>(x0);
      const double top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
      const double bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
      dst[y * dw + x] = top * (1 - wy) + bot * wy;
    }
  }
  return dst;
}

enum class HalfMode { None, Left, Right, Both };

inline HalfMode parse_half(std::string_view s) {
  if (s == "none") return HalfMode::None;
  if (s == "left") return HalfMode::Left;
  if (s == "right") return HalfMode::Right;
  if (s == "both") return HalfMode::Both;
  throw Error(ErrorCode::ConfigError, "half must be none|left|right|both, got '" + std::string(s) + "'");
}

inline std::vector<Tensor> crop_and_resize(const GrayImage& img, HalfMode half, std::size_t size) {
  auto crop = [&](std::size_t x0, std::size_t w) {
    std::vector<double> px(w * img.height);
    for (std::size_t y = 0; y < img.height; ++y)
      std::copy_n(img.pixels.begin() + y * img.width + x0, w, px.begin() + y * w);
    return Tensor::build({1, size, size}, resize_bilinear(px, w, img.height, size, size));
  };
  const std::size_t hw = std::max<std::size_t>(1, img.width / 2);
  switch (half) {
    case HalfMode::None: return {crop(0, img.width)};
    case HalfMode::Left: return {crop(0, hw)};
    case HalfMode::Right: return {crop(img.width - hw, hw)};
    case HalfMode::Both: return {crop(0, hw), crop(img.width - hw, hw)};
  }
  return {};
}

namespace detail {

inline std::vector<std::filesystem::path> sorted_pgms(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline void load_class_dir(const std::filesystem::path& dir, std::optional<std::size_t> label, std::size_t domain,
                           HalfMode half, std::size_t size, bool must_be_nonempty,
                           std::vector<DomainSample>& dst) {
  if (!std::filesystem::is_directory(dir)) return;
  auto files = sorted_pgms(dir);
  if (files.empty() && must_be_nonempty) throw Error(ErrorCode::EmptyClassDir, dir.string());
  for (const auto& f : files)
    for (auto& t : crop_and_resize(read_pgm(f), half, size)) dst.push_back(DomainSample{std::move(t), label, domain});
}

}  // namespace detail

// Layout: root/<domain>/{train,test}/{narrow,open,unlabeled}/*.pgm. "source" is
// domain 0; the remaining domain directories follow in lexicographic order.
// Labels found in a target's train split are discarded.
inline Benchmark load_dataset_dir(const std::filesystem::path& root, HalfMode half, std::size_t image_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw Error(ErrorCode::IoError, "not a directory: " + root.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  auto src = std::find(names.begin(), names.end(), "source");
  if (src == names.end()) throw Error(ErrorCode::MissingSource, root.string() + " has no 'source' directory");
  std::rotate(names.begin(), src, src + 1);

  Benchmark b;
  b.image_size = image_size;
  for (std::size_t d = 0; d < names.size(); ++d) {
    DomainData dd;
    dd.name = names[d];
    const fs::path base = root / names[d];
    for (const char* split : {"train", "test"}) {
      auto& dst = std::string_view(split) == "train" ? dd.train : dd.test;
      const bool keep_labels = d == 0 || std::string_view(split) == "test";
      for (std::size_t c = 0; c < kNumClasses; ++c)
        detail::load_class_dir(base / split / kClassNames[c], keep_labels ? std::optional<std::size_t>(c) : std::nullopt,
                               d, half, image_size, keep_labels, dst);
      if (!keep_labels) detail::load_class_dir(base / split / "unlabeled", std::nullopt, d, half, image_size, false, dst);
    }
    b.domains.push_back(std::move(dd));
  }
  return b;
}

// Writes the benchmark in the load_dataset_dir layout. File names are
// zero-padded sample indices so loading restores the original order.
inline void export_benchmark(const Benchmark& b, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const auto& dd : b.domains) {
    for (const char* split : {"train", "test"}) {
      const auto& samples = std::string_view(split) == "train" ? dd.train : dd.test;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const fs::path dir = root / dd.name / split / (s.class_label ? kClassNames[*s.class_label] : "unlabeled");
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.pgm", i);
        write_pgm(dir / name, s.image.shape[2], s.image.shape[1], s.image.data);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Mixed-domain batches.

struct DomainBatch {
  Tensor images;                        // [N, 1, H, W]
  Tensor class_labels;                  // [n_s, C] one-hot rows for the source subset, in order
  Tensor domain_labels;                 // [N, B+1]
  std::vector<bool> source_mask;
  std::vector<std::size_t> source_rows;

  std::size_t size() const { return source_mask.size(); }
};

inline DomainBatch make_batch(const std::vector<const DomainSample*>& samples, std::size_t num_domains) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
  const Shape& s0 = samples[0]->image.shape;
  const std::size_t n = samples.size(), px = samples[0]->image.size();
  DomainBatch b;
  std::vector<double> imgs(n * px), dl(n * num_domains, 0.0), cl;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = *samples[i];
    if (s.image.shape != s0) throw Error(ErrorCode::ShapeMismatch, "mixed image sizes in batch");
    std::copy(s.image.data.begin(), s.image.data.end(), imgs.begin() + i * px);
    if (s.domain_index >= num_domains) throw Error(ErrorCode::InvalidSpec, "domain index out of range");
    dl[i * num_domains + s.domain_index] = 1.0;
    const bool is_source = s.domain_index == 0;
    b.source_mask.push_back(is_source);
    if (is_source) {
      if (!s.class_label) throw Error(ErrorCode::InvalidSpec, "source sample without class label");
      b.source_rows.push_back(i);
      cl.resize(cl.size() + kNumClasses, 0.0);
      cl[cl.size() - kNumClasses + *s.class_label] = 1.0;
    }
  }
  b.images = Tensor::build({n, s0[0], s0[1], s0[2]}, std::move(imgs));
  b.domain_labels = Tensor::build({n, num_domains}, std::move(dl));
  if (!b.source_rows.empty()) b.class_labels = Tensor::build({b.source_rows.size(), kNumClasses}, std::move(cl));
  return b;
}

// Each batch takes batch_size / (B+1) samples from every non-empty domain.
// Domains are read through independent cyclic streams reshuffled on every
// wrap-around; an epoch is ceil(largest domain / per-domain count) batches.
class BatchSampler {
 public:
  BatchSampler(std::vector<const std::vector<DomainSample>*> domains, std::size_t batch_size, std::uint64_t seed)
      : domains_(std::move(domains)) {
    if (domains_.empty() || batch_size == 0 || batch_size % domains_.size() != 0)
      throw Error(ErrorCode::IndivisibleBatch, "batch size " + std::to_string(batch_size) + " over " +
                                                   std::to_string(domains_.size()) + " domains");
    per_domain_ = batch_size / domains_.size();
    std::size_t largest = 0;
    for (std::size_t d = 0; d < domains_.size(); ++d) {
      largest = std::max(largest, domains_[d]->size());
      streams_.push_back(Stream{{}, 0, std::mt19937_64(detail::mix_seed({seed, 0xba7c4ULL, d}))});
    }
    if (domains_[0]->empty()) throw Error(ErrorCode::EmptyInput, "source domain has no training samples");
    batches_per_epoch_ = (largest + per_domain_ - 1) / per_domain_;
  }

  std::size_t per_domain() const { return per_domain_; }
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }

  DomainBatch next() {
    std::vector<const DomainSample*> picked;
    for (std::size_t d = 0; d < domains_.size(); ++d) {
      const auto& set = *domains_[d];
      if (set.empty()) continue;
      auto& st = streams_[d];
      for (std::size_t k = 0; k < per_domain_; ++k) {
        if (st.pos == st.order.size()) {
          st.order.resize(set.size());
          std::iota(st.order.begin(), st.order.end(), std::size_t{0});
          std::shuffle(st.order.begin(), st.order.end(), st.rng);
          st.pos = 0;
        }
        picked.push_back(&set[st.order[st.pos++]]);
      }
    }
    return make_batch(picked, domains_.size());
  }

 private:
  struct Stream {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::mt19937_64 rng;
  };
  std::vector<const std::vector<DomainSample>*> domains_;
  std::vector<Stream> streams_;
  std::size_t per_domain_ = 0;
  std::size_t batches_per_epoch_ = 0;
};

}  // namespace m2dan
