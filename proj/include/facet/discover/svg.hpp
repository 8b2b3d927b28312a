#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "facet/discover/cluster.hpp"
#include "facet/discover/histogram.hpp"
#include "facet/error.hpp"

namespace facet::discover {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ReportError("cannot write " + path.string());
  os << s;
}

}  // namespace detail

/// Step outlines of the three conditions on shared bins, with dashed lines at
/// the detected modes.
inline std::string histogram_svg(const LatentHistogram& h) {
  constexpr double W = 480, H = 260, L = 40, R = 10, T = 30, B = 30;
  static constexpr std::array<const char*, 3> colors{"#1f77b4", "#ff7f0e", "#2ca02c"};
  const std::size_t bins = h.bin_edges.size() - 1;
  double peak = 0.0;
  for (Condition c : kConditions) {
    const auto ci = static_cast<std::size_t>(c);
    for (auto v : h.counts[ci]) peak = std::max(peak, static_cast<double>(v) / static_cast<double>(h.samples[ci]));
  }
  if (peak <= 0.0) peak = 1.0;
  const double lo = h.bin_edges.front(), hi = h.bin_edges.back();
  auto px = [&](double v) { return L + (v - lo) / (hi - lo) * (W - L - R); };
  auto py = [&](double frac) { return H - B - frac / peak * (H - T - B); };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" +
                  detail::num(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + detail::num(L) + "\" y=\"18\">latent " + std::to_string(h.latent_index) + ", mean shift " +
       detail::num(h.mean_shift) + "</text>\n";
  s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(H - B) + "\" x2=\"" + detail::num(W - R) + "\" y2=\"" +
       detail::num(H - B) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + detail::num(L) + "\" y=\"" + detail::num(H - 10) + "\">" + detail::num(lo) + "</text>\n";
  s += "<text x=\"" + detail::num(W - R - 30) + "\" y=\"" + detail::num(H - 10) + "\">" + detail::num(hi) + "</text>\n";
  for (Condition c : kConditions) {
    const auto ci = static_cast<std::size_t>(c);
    const double n = static_cast<double>(h.samples[ci]);
    std::string pts = detail::num(px(lo)) + "," + detail::num(py(0.0));
    for (std::size_t b = 0; b < bins; ++b) {
      const double y = py(static_cast<double>(h.counts[ci][b]) / n);
      pts += " " + detail::num(px(h.bin_edges[b])) + "," + detail::num(y) + " " + detail::num(px(h.bin_edges[b + 1])) +
             "," + detail::num(y);
    }
    pts += " " + detail::num(px(hi)) + "," + detail::num(py(0.0));
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[ci]) + "\" points=\"" + pts + "\"/>\n";
    for (double m : h.modes[ci]) {
      s += "<line x1=\"" + detail::num(px(m)) + "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(px(m)) +
           "\" y2=\"" + detail::num(H - B) + "\" stroke=\"" + colors[ci] + "\" stroke-dasharray=\"3,3\"/>\n";
    }
    s += "<text x=\"" + detail::num(W - R - 90) + "\" y=\"" + detail::num(T + 14.0 * static_cast<double>(ci)) +
         "\" fill=\"" + colors[ci] + "\">" + condition_name(c) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Heat map of counts[i][j] (row = to, column = from).
inline std::string transitions_svg(const TransitionMatrix& t) {
  constexpr double cell = 28, margin = 40;
  const double side = margin + cell * static_cast<double>(t.k) + 10;
  std::size_t peak = 1;
  for (const auto& row : t.counts)
    for (auto v : row) peak = std::max(peak, v);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(side) + "\" height=\"" +
                  detail::num(side) + "\" font-family=\"sans-serif\" font-size=\"9\">\n";
  s += "<text x=\"4\" y=\"12\">to (rows) / from (columns)</text>\n";
  for (std::size_t i = 0; i < t.k; ++i)
    for (std::size_t j = 0; j < t.k; ++j) {
      const auto shade = static_cast<int>(std::lround(255.0 * (1.0 - static_cast<double>(t.counts[i][j]) / static_cast<double>(peak))));
      const double x = margin + cell * static_cast<double>(j), y = margin + cell * static_cast<double>(i);
      s += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(y) + "\" width=\"" + detail::num(cell) +
           "\" height=\"" + detail::num(cell) + "\" fill=\"rgb(255," + std::to_string(shade) + "," +
           std::to_string(shade) + ")\" stroke=\"#ccc\"/>\n";
      s += "<text x=\"" + detail::num(x + 3) + "\" y=\"" + detail::num(y + cell / 2 + 3) + "\">" +
           std::to_string(t.counts[i][j]) + "</text>\n";
    }
  for (std::size_t i = 0; i < t.k; ++i) {
    const double c = margin + cell * static_cast<double>(i) + cell / 2;
    s += "<text x=\"" + detail::num(margin - 14) + "\" y=\"" + detail::num(c + 3) + "\">" + std::to_string(i) + "</text>\n";
    s += "<text x=\"" + detail::num(c - 3) + "\" y=\"" + detail::num(margin - 4) + "\">" + std::to_string(i) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace facet::discover
