#pragma once

// Training curves as a standalone SVG: loss panel (l_fo, l_en, l_d) on the
// left, one AUC series per auc_<domain> column on the right.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "m2dan/config.hpp"
#include "m2dan/error.hpp"

namespace m2dan {

struct HistoryTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::ptrdiff_t column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : it - columns.begin();
  }
};

inline HistoryTable parse_history_csv(std::string_view text) {
  HistoryTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(detail::trim(cell));
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line) || detail::trim(line).empty()) throw Error(ErrorCode::MalformedCsv, "missing header");
  t.columns = split(detail::trim(line));
  for (const char* need : {"epoch", "l_fo", "l_en", "l_d"})
    if (t.column(need) < 0) throw Error(ErrorCode::MalformedCsv, std::string("missing column ") + need);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = split(detail::trim(line));
    if (cells.size() != t.columns.size())
      throw Error(ErrorCode::MalformedCsv, "line " + std::to_string(lineno) + ": wrong number of fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(detail::parse_f64("csv", c));
      } catch (const Error&) {
        throw Error(ErrorCode::MalformedCsv, "line " + std::to_string(lineno) + ": bad number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw Error(ErrorCode::MalformedCsv, "no data rows");
  return t;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

struct Panel {
  double x0, y0, w, h;
  std::string title, ylabel;
};

// Draws axes, ticks and one polyline per series; y range is fixed when lo < hi
// is given, otherwise taken from the data.
inline void draw_panel(std::ostream& os, const Panel& p, const std::vector<double>& xs,
                       const std::vector<std::pair<std::string, std::vector<double>>>& series, double lo, double hi) {
  if (!(lo < hi)) {
    lo = 0.0;
    hi = 0.0;
    for (const auto& [_, ys] : series)
      for (double y : ys) hi = std::max(hi, y);
    if (hi <= lo) hi = lo + 1.0;
  }
  const double xmin = xs.front(), xmax = xs.size() > 1 ? xs.back() : xs.front() + 1.0;
  auto sx = [&](double x) { return p.x0 + (x - xmin) / (xmax - xmin) * p.w; };
  auto sy = [&](double y) { return p.y0 + p.h - (y - lo) / (hi - lo) * p.h; };

  os << "<g>\n";
  os << "<text x=\"" << fmt(p.x0 + p.w / 2) << "\" y=\"" << fmt(p.y0 - 12)
     << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(p.title) << "</text>\n";
  os << "<rect x=\"" << fmt(p.x0) << "\" y=\"" << fmt(p.y0) << "\" width=\"" << fmt(p.w) << "\" height=\"" << fmt(p.h)
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    os << "<text x=\"" << fmt(p.x0 - 6) << "\" y=\"" << fmt(sy(v) + 4) << "\" text-anchor=\"end\" font-size=\"10\">"
       << fmt(v) << "</text>\n";
  }
  os << "<text x=\"" << fmt(p.x0) << "\" y=\"" << fmt(p.y0 + p.h + 14) << "\" font-size=\"10\">" << fmt(xmin)
     << "</text>\n";
  os << "<text x=\"" << fmt(p.x0 + p.w) << "\" y=\"" << fmt(p.y0 + p.h + 14)
     << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(xmax) << "</text>\n";
  os << "<text x=\"" << fmt(p.x0 + p.w / 2) << "\" y=\"" << fmt(p.y0 + p.h + 30)
     << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  os << "<text x=\"" << fmt(p.x0 - 40) << "\" y=\"" << fmt(p.y0 + p.h / 2) << "\" text-anchor=\"middle\" font-size=\"12\""
     << " transform=\"rotate(-90 " << fmt(p.x0 - 40) << ' ' << fmt(p.y0 + p.h / 2) << ")\">" << xml_escape(p.ylabel)
     << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& [name, ys] = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    os << "<polyline class=\"series\" data-name=\"" << xml_escape(name) << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? " " : "") << fmt(sx(xs[i])) << ',' << fmt(sy(ys[i]));
    os << "\"/>\n";
    const double ly = p.y0 + 14 + 14 * static_cast<double>(s);
    os << "<line x1=\"" << fmt(p.x0 + p.w - 110) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(p.x0 + p.w - 90)
       << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt(p.x0 + p.w - 86) << "\" y=\"" << fmt(ly) << "\" font-size=\"10\">" << xml_escape(name)
       << "</text>\n";
  }
  os << "</g>\n";
}

}  // namespace detail

inline std::string render_curves_svg(const HistoryTable& t) {
  std::vector<double> xs;
  const auto ep = static_cast<std::size_t>(t.column("epoch"));
  for (const auto& r : t.rows) xs.push_back(r[ep]);
  auto col = [&](std::size_t c) {
    std::vector<double> ys;
    for (const auto& r : t.rows) ys.push_back(r[c]);
    return ys;
  };
  std::vector<std::pair<std::string, std::vector<double>>> losses, aucs;
  for (const char* name : {"l_fo", "l_en", "l_d"}) losses.emplace_back(name, col(static_cast<std::size_t>(t.column(name))));
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (t.columns[c].rfind("auc_", 0) == 0) aucs.emplace_back(t.columns[c].substr(4), col(c));

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"400\" viewBox=\"0 0 960 400\""
     << " font-family=\"sans-serif\">\n"
     << "<rect width=\"960\" height=\"400\" fill=\"white\"/>\n";
  detail::draw_panel(os, {70, 40, 380, 300, "Training losses", "loss"}, xs, losses, 0.0, 0.0);
  detail::draw_panel(os, {550, 40, 380, 300, "Test AUC", "AUC"}, xs, aucs, 0.0, 1.0);
  os << "</svg>\n";
  return os.str();
}

inline void plot_history_file(const std::filesystem::path& csv, const std::filesystem::path& svg) {
  std::ifstream in(csv);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + csv.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = render_curves_svg(parse_history_csv(ss.str()));
  std::ofstream out(svg, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + svg.string());
  out << text;
}

}  // namespace m2dan
