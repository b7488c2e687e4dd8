#include "crossgrid/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace crossgrid::svg {

namespace {

std::string escape(std::string_view s) {
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

void header(std::ostringstream& o, double w, double h, const Options& opt) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!opt.comments.empty() || opt.timestamp) {
    o << "<!--\n";
    for (const auto& c : opt.comments) {
      std::string safe = c;
      for (std::size_t p; (p = safe.find("--")) != std::string::npos;) safe.replace(p, 2, "- -");
      o << "  " << safe << '\n';
    }
    if (opt.timestamp) o << "  generated: " << *opt.timestamp << '\n';
    o << "-->\n";
  }
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    o << "<text x=\"" << num(w / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(opt.title)
      << "</text>\n";
  }
}

// light yellow -> teal -> dark blue
std::string colour(double t) {
  static const double stops[][3] = {{255, 255, 217}, {127, 205, 187}, {29, 145, 192}, {8, 29, 88}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 3.0;
  int k = std::min(2, static_cast<int>(t));
  double f = t - k;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[k][0] + f * (stops[k + 1][0] - stops[k][0]))),
                static_cast<int>(std::lround(stops[k][1] + f * (stops[k + 1][1] - stops[k][1]))),
                static_cast<int>(std::lround(stops[k][2] + f * (stops[k + 1][2] - stops[k][2]))));
  return buf;
}

}  // namespace

std::string dendrogram(const similarity::LinkageTree& t, const Options& opt, std::optional<double> cut_height) {
  const std::size_t n = t.leaf_count();
  const double step = 28, left = 50, top = 32, plot_h = 260, bottom = 60;
  const double width = left + step * static_cast<double>(n) + 20;
  const double height = top + plot_h + bottom;
  const double hmax = std::max(t.max_height(), cut_height.value_or(0.0));
  auto y_of = [&](double h) { return top + plot_h - (hmax > 0 ? h / hmax : 0.0) * plot_h; };

  std::vector<double> x(n + t.merges.size()), y(n + t.merges.size(), y_of(0));
  auto order = similarity::leaf_order(t);
  for (std::size_t pos = 0; pos < order.size(); ++pos) x[order[pos]] = left + step * (static_cast<double>(pos) + 0.5);

  std::ostringstream o;
  header(o, width, height, opt);
  // axis
  o << "<line x1=\"" << num(left - 8) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left - 8) << "\" y2=\""
    << num(top + plot_h) << "\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double h = hmax * k / 4.0;
    o << "<text x=\"" << num(left - 12) << "\" y=\"" << num(y_of(h) + 4) << "\" text-anchor=\"end\" font-size=\"9\">"
      << num(h) << "</text>\n";
  }
  o << "<g stroke=\"#1d4e89\" fill=\"none\">\n";
  for (std::size_t k = 0; k < t.merges.size(); ++k) {
    const auto& m = t.merges[k];
    const std::size_t node = n + k;
    const double yh = y_of(m.height);
    x[node] = (x[m.left] + x[m.right]) / 2;
    y[node] = yh;
    o << "<path d=\"M" << num(x[m.left]) << ' ' << num(y[m.left]) << " V" << num(yh) << " H" << num(x[m.right])
      << " V" << num(y[m.right]) << "\"/>\n";
  }
  o << "</g>\n";
  if (cut_height) {
    o << "<line x1=\"" << num(left - 8) << "\" y1=\"" << num(y_of(*cut_height)) << "\" x2=\"" << num(width - 10)
      << "\" y2=\"" << num(y_of(*cut_height)) << "\" stroke=\"#c0392b\" stroke-dasharray=\"5,3\"/>\n";
  }
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    o << "<text x=\"" << num(x[leaf]) << "\" y=\"" << num(top + plot_h + 16) << "\" text-anchor=\"middle\">"
      << escape(t.leaf_ids[leaf]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const std::vector<std::string>& ids, const Eigen::MatrixXd& values, const Options& opt,
                    const std::string& row_axis, const std::string& col_axis) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (values.rows() != n || values.cols() != n) throw Error("heatmap: matrix does not match id count");
  const double cell = 26, left = 70, top = 50, legend = 70;
  const double width = left + cell * static_cast<double>(n) + legend;
  const double height = top + cell * static_cast<double>(n) + 50;
  const double lo = n ? values.minCoeff() : 0.0, hi = n ? values.maxCoeff() : 1.0;

  std::ostringstream o;
  header(o, width, height, opt);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = top + cell * static_cast<double>(i);
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"end\">"
      << escape(ids[static_cast<std::size_t>(i)]) << "</text>\n";
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = values(i, j);
      const double tnorm = hi > lo ? (v - lo) / (hi - lo) : 0.0;
      o << "<rect x=\"" << num(left + cell * static_cast<double>(j)) << "\" y=\"" << num(y) << "\" width=\""
        << num(cell) << "\" height=\"" << num(cell) << "\" fill=\"" << colour(tnorm) << "\"><title>"
        << escape(ids[static_cast<std::size_t>(i)]) << " -> " << escape(ids[static_cast<std::size_t>(j)]) << ": "
        << v << "</title></rect>\n";
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    o << "<text x=\"" << num(left + cell * (static_cast<double>(j) + 0.5)) << "\" y=\""
      << num(top + cell * static_cast<double>(n) + 14) << "\" text-anchor=\"middle\">"
      << escape(ids[static_cast<std::size_t>(j)]) << "</text>\n";
  }
  o << "<text x=\"" << num(left + cell * static_cast<double>(n) / 2) << "\" y=\""
    << num(top + cell * static_cast<double>(n) + 34) << "\" text-anchor=\"middle\">" << escape(col_axis) << "</text>\n";
  o << "<text transform=\"translate(14," << num(top + cell * static_cast<double>(n) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(row_axis) << "</text>\n";
  // legend
  const double lx = left + cell * static_cast<double>(n) + 16;
  for (int k = 0; k < 10; ++k) {
    o << "<rect x=\"" << num(lx) << "\" y=\"" << num(top + 12.0 * (9 - k)) << "\" width=\"14\" height=\"12\" fill=\""
      << colour(k / 9.0) << "\"/>\n";
  }
  o << "<text x=\"" << num(lx + 18) << "\" y=\"" << num(top + 10) << "\" font-size=\"9\">" << num(hi) << "</text>\n";
  o << "<text x=\"" << num(lx + 18) << "\" y=\"" << num(top + 120) << "\" font-size=\"9\">" << num(lo) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

void write(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << svg;
}

}  // namespace crossgrid::svg
