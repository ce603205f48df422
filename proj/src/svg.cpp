// SPDX-License-Identifier: Apache-2.0
#include "npmixer/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "npmixer/errors.hpp"

namespace npmixer {
namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string forecast_svg(const std::vector<std::string>& channels, const std::vector<std::vector<double>>& history,
                         const std::vector<std::vector<double>>& forecast) {
  if (history.size() != channels.size() || forecast.size() != channels.size()) {
    throw DimensionError("plot needs one history and one forecast series per channel");
  }
  constexpr double width = 720, panel = 160, left = 60, right = 20, top = 20, gap = 30;
  const double height = top + static_cast<double>(channels.size()) * (panel + gap);
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << num(height)
     << "\" viewBox=\"0 0 " << width << ' ' << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& h = history[c];
    const auto& f = forecast[c];
    const std::size_t n = h.size() + f.size();
    double lo = 0, hi = 1;
    if (n > 0) {
      lo = hi = h.empty() ? f.front() : h.front();
      for (double v : h) lo = std::min(lo, v), hi = std::max(hi, v);
      for (double v : f) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double y0 = top + static_cast<double>(c) * (panel + gap);
    auto px = [&](std::size_t i) { return left + (width - left - right) * static_cast<double>(i) / std::max<double>(1, n - 1); };
    auto py = [&](double v) { return y0 + panel - panel * (v - lo) / (hi - lo); };

    os << "<g>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << num(y0 + panel) << "\" x2=\"" << width - right << "\" y2=\""
       << num(y0 + panel) << "\" stroke=\"#444\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << num(y0) << "\" x2=\"" << left << "\" y2=\"" << num(y0 + panel)
       << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << num(y0 + 10) << "\" text-anchor=\"end\">" << num(hi) << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << num(y0 + panel) << "\" text-anchor=\"end\">" << num(lo)
       << "</text>\n";
    os << "<text x=\"" << left + 6 << "\" y=\"" << num(y0 + 12) << "\">" << escape(channels[c]) << "</text>\n";
    if (!h.empty()) {
      os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < h.size(); ++i) os << num(px(i)) << ',' << num(py(h[i])) << ' ';
      os << "\"/>\n";
    }
    if (!f.empty()) {
      os << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"4 2\" points=\"";
      if (!h.empty()) os << num(px(h.size() - 1)) << ',' << num(py(h.back())) << ' ';
      for (std::size_t i = 0; i < f.size(); ++i) os << num(px(h.size() + i)) << ',' << num(py(f[i])) << ' ';
      os << "\"/>\n";
    }
    os << "</g>\n";
  }
  const double ly = height - 8;
  os << "<line x1=\"" << left << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << left + 20 << "\" y2=\"" << num(ly - 4)
     << "\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  os << "<text x=\"" << left + 24 << "\" y=\"" << num(ly) << "\">history</text>\n";
  os << "<line x1=\"" << left + 90 << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << left + 110 << "\" y2=\""
     << num(ly - 4) << "\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"4 2\"/>\n";
  os << "<text x=\"" << left + 114 << "\" y=\"" << num(ly) << "\">forecast</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace npmixer
