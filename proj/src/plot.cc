#include "arccm/plot.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace arccm {

namespace {

std::string Fmt(double v, int precision = 4) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general,
                         precision);
  return std::string(buf, r.ptr);
}

std::string Escape(const std::string& s) {
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

// 1-2-5 ticks covering [lo, hi].
std::vector<double> NiceTicks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
    t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  }
  return t;
}

}  // namespace

std::string RenderSvg(const PlotSpec& spec) {
  const double W = spec.width, H = spec.height;
  const double left = 70, right = 20, top = 36, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  auto ty = [&](double y) {
    return spec.log_y ? std::log10(std::max(y, 1e-300)) : y;
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : spec.series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("series '" + s.label + "' has x/y mismatch");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (spec.log_y && !(s.y[i] > 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
  if (x1 - x0 <= 0) x1 = x0 + 1;
  if (y1 - y0 <= 0) { y0 -= 0.5; y1 += 0.5; }
  if (spec.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };
  auto pyt = [&](double yt) { return top + (1.0 - (yt - y0) / (y1 - y0)) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + Fmt(W) +
       "\" height=\"" + Fmt(H) + "\" viewBox=\"0 0 " + Fmt(W) + " " + Fmt(H) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + Fmt(W / 2) + "\" y=\"22\" text-anchor=\"middle\" "
       "font-size=\"14\">" + Escape(spec.title) + "</text>\n";
  s += "<rect x=\"" + Fmt(left) + "\" y=\"" + Fmt(top) + "\" width=\"" +
       Fmt(pw) + "\" height=\"" + Fmt(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double v : NiceTicks(x0, x1)) {
    const double X = px(v);
    s += "<line x1=\"" + Fmt(X, 6) + "\" y1=\"" + Fmt(top + ph, 6) + "\" x2=\"" +
         Fmt(X, 6) + "\" y2=\"" + Fmt(top + ph + 5, 6) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + Fmt(X, 6) + "\" y=\"" + Fmt(top + ph + 18, 6) +
         "\" text-anchor=\"middle\">" + Fmt(v) + "</text>\n";
  }
  std::vector<double> yt;
  if (spec.log_y) {
    const int step = std::max(1, static_cast<int>((y1 - y0) / 8));
    for (double v = y0; v <= y1 + 1e-9; v += step) yt.push_back(v);
  } else {
    yt = NiceTicks(y0, y1);
  }
  for (double v : yt) {
    const double Y = pyt(v);
    s += "<line x1=\"" + Fmt(left - 5) + "\" y1=\"" + Fmt(Y, 6) + "\" x2=\"" +
         Fmt(left) + "\" y2=\"" + Fmt(Y, 6) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + Fmt(left) + "\" y1=\"" + Fmt(Y, 6) + "\" x2=\"" +
         Fmt(left + pw, 6) + "\" y2=\"" + Fmt(Y, 6) +
         "\" stroke=\"#e0e0e0\"/>\n";
    const std::string label = spec.log_y ? "1e" + Fmt(v) : Fmt(v);
    s += "<text x=\"" + Fmt(left - 8) + "\" y=\"" + Fmt(Y + 4, 6) +
         "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  s += "<text x=\"" + Fmt(left + pw / 2, 6) + "\" y=\"" + Fmt(H - 10) +
       "\" text-anchor=\"middle\">" + Escape(spec.x_label) + "</text>\n";
  s += "<text transform=\"translate(16," + Fmt(top + ph / 2, 6) +
       ") rotate(-90)\" text-anchor=\"middle\">" + Escape(spec.y_label) +
       "</text>\n";

  for (double m : spec.markers) {
    if (m < x0 || m > x1) continue;
    s += "<line x1=\"" + Fmt(px(m), 6) + "\" y1=\"" + Fmt(top) + "\" x2=\"" +
         Fmt(px(m), 6) + "\" y2=\"" + Fmt(top + ph, 6) +
         "\" stroke=\"gray\" stroke-dasharray=\"2,3\"/>\n";
  }

  s += "<g clip-path=\"none\">\n";
  for (const auto& ser : spec.series) {
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
      if (spec.log_y && !(ser.y[i] > 0.0)) continue;
      pts += Fmt(px(ser.x[i]), 6) + "," + Fmt(py(ser.y[i]), 6) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + ser.color +
         "\" stroke-width=\"1.5\"";
    if (ser.dashed) s += " stroke-dasharray=\"6,4\"";
    s += " points=\"" + pts + "\"/>\n";
  }
  s += "</g>\n";

  double ly = top + 14;
  for (const auto& ser : spec.series) {
    const double lx = left + pw - 170;
    s += "<line x1=\"" + Fmt(lx, 6) + "\" y1=\"" + Fmt(ly - 4, 6) + "\" x2=\"" +
         Fmt(lx + 24, 6) + "\" y2=\"" + Fmt(ly - 4, 6) + "\" stroke=\"" +
         ser.color + "\" stroke-width=\"2\"";
    if (ser.dashed) s += " stroke-dasharray=\"6,4\"";
    s += "/>\n";
    s += "<text x=\"" + Fmt(lx + 30, 6) + "\" y=\"" + Fmt(ly, 6) + "\">" +
         Escape(ser.label) + "</text>\n";
    ly += 16;
  }
  s += "</svg>\n";
  return s;
}

void WriteSvg(const PlotSpec& spec, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << RenderSvg(spec);
}

}  // namespace arccm
