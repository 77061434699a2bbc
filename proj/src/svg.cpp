#include "gsr/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gsr/csv.hpp"

namespace gsr {
namespace {

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) >= 1e5 || std::abs(v) < 1e-3)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%g", v);
  }
  return buf;
}

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

/// Round tick positions covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

struct Frame {
  double x0, y0, w, h;
  double xmin, xmax, ymin, ymax;
  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void header(std::ostringstream& os, double width, double height, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
     << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(width / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xl, const std::string& yl,
          bool log_y) {
  os << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w)
     << "\" height=\"" << num(f.h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : nice_ticks(f.xmin, f.xmax)) {
    const double x = f.px(t);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(f.y0 + f.h) << "\" x2=\"" << num(x)
       << "\" y2=\"" << num(f.y0 + f.h + 4) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << num(f.y0 + f.h + 16)
       << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(f.ymin, f.ymax)) {
    const double y = f.py(t);
    os << "<line x1=\"" << num(f.x0 - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(f.x0)
       << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(f.x0 - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
       << tick_label(log_y ? std::pow(10.0, t) : t) << "</text>\n";
  }
  os << "<text x=\"" << num(f.x0 + f.w / 2) << "\" y=\"" << num(f.y0 + f.h + 32)
     << "\" text-anchor=\"middle\">" << escape(xl) << "</text>\n";
  os << "<text transform=\"translate(" << num(f.x0 - 46) << ',' << num(f.y0 + f.h / 2)
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(yl) << "</text>\n";
}

std::string heat_color(double v, double scale) {
  const double t = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
  // white at zero, red for positive, blue for negative
  const int a = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
  char buf[16];
  if (t >= 0.0) {
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", a, a);
  } else {
    std::snprintf(buf, sizeof buf, "#%02x%02xff", a, a);
  }
  return buf;
}

}  // namespace

bool Table::has(const std::string& column) const {
  return std::find(columns.begin(), columns.end(), column) != columns.end();
}

std::size_t Table::index(const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw IoError("missing column '" + column + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> Table::column(const std::string& name) const {
  const std::size_t i = index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[i]);
  return out;
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      const auto body = trim(s.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        t.metadata[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
      }
      continue;
    }
    const auto fields = split(s);
    if (t.columns.empty()) {
      for (auto f : fields) t.columns.emplace_back(trim(f));
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(t.columns.size()) + " fields");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw IoError(path.string() + ": no header row");
  return t;
}

std::string render_line_plot(const LinePlot& plot) {
  const double width = 720, height = 440;
  Frame f{70, 36, 470, 340, 0, 1, 0, 1};
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto ty = [&](double y) { return plot.log_y ? std::log10(std::max(y, 1e-12)) : y; };
  for (const Series& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  f.xmin = xmin;
  f.xmax = xmax;
  f.ymin = ymin - pad;
  f.ymax = ymax + pad;

  std::ostringstream os;
  header(os, width, height, plot.title);
  axes(os, f, plot.x_label, plot.y_label, plot.log_y);
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const Series& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(ty(s.y[i])));
    }
    os << "\"/>\n";
    const double ly = f.y0 + 10 + 16.0 * static_cast<double>(k);
    os << "<line x1=\"560\" y1=\"" << num(ly) << "\" x2=\"580\" y2=\"" << num(ly) << "\" stroke=\""
       << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"586\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_heatmaps(const std::string& title, const std::vector<HeatmapPanel>& panels) {
  const double cell_panel = 160, gap = 30;
  const std::size_t cols = std::min<std::size_t>(4, std::max<std::size_t>(1, panels.size()));
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double width = gap + static_cast<double>(cols) * (cell_panel + gap);
  const double height = 40 + static_cast<double>(rows) * (cell_panel + gap + 14);
  double scale = 0.0;
  for (const auto& p : panels) {
    for (double v : p.values) scale = std::max(scale, std::abs(v));
  }
  std::ostringstream os;
  header(os, width, height, title + " (scale " + tick_label(scale) + ")");
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const HeatmapPanel& p = panels[k];
    const double ox = gap + static_cast<double>(k % cols) * (cell_panel + gap);
    const double oy = 40 + static_cast<double>(k / cols) * (cell_panel + gap + 14);
    os << "<text x=\"" << num(ox + cell_panel / 2) << "\" y=\"" << num(oy + 10)
       << "\" text-anchor=\"middle\">" << escape(p.title) << "</text>\n";
    const double cell = cell_panel / static_cast<double>(std::max<std::size_t>(1, p.n));
    for (std::size_t i = 0; i < p.n; ++i) {
      for (std::size_t j = 0; j < p.n; ++j) {
        os << "<rect x=\"" << num(ox + static_cast<double>(j) * cell) << "\" y=\""
           << num(oy + 16 + static_cast<double>(i) * cell) << "\" width=\"" << num(cell)
           << "\" height=\"" << num(cell) << "\" fill=\"" << heat_color(p.values[i * p.n + j], scale)
           << "\"/>\n";
      }
    }
    os << "<rect x=\"" << num(ox) << "\" y=\"" << num(oy + 16) << "\" width=\"" << num(cell_panel)
       << "\" height=\"" << num(cell_panel) << "\" fill=\"none\" stroke=\"black\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_scatter(const std::string& title, const std::vector<ScatterPanel>& panels) {
  const double size = 180, gap = 40;
  const std::size_t cols = std::min<std::size_t>(4, std::max<std::size_t>(1, panels.size()));
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double width = gap + static_cast<double>(cols) * (size + gap);
  const double height = 40 + static_cast<double>(rows) * (size + gap + 20);
  std::ostringstream os;
  header(os, width, height, title);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const ScatterPanel& p = panels[k];
    // Window centred on the reference mean, wide enough for the points and the reference circle.
    double half = std::max(4.0 * p.ref_radius, 0.05);
    for (const Point2& q : p.points) half = std::max(half, (q - p.centre).cwiseAbs().maxCoeff());
    half *= 1.05;
    Frame f{gap + static_cast<double>(k % cols) * (size + gap),
            40 + static_cast<double>(k / cols) * (size + gap + 20) + 14,
            size,
            size,
            p.centre.x() - half,
            p.centre.x() + half,
            p.centre.y() - half,
            p.centre.y() + half};
    os << "<text x=\"" << num(f.x0 + size / 2) << "\" y=\"" << num(f.y0 - 4)
       << "\" text-anchor=\"middle\">" << escape(p.title) << "</text>\n";
    os << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(size)
       << "\" height=\"" << num(size) << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (p.ref_radius > 0.0) {
      os << "<circle cx=\"" << num(f.px(p.centre.x())) << "\" cy=\"" << num(f.py(p.centre.y()))
         << "\" r=\"" << num(p.ref_radius / (2 * half) * size)
         << "\" fill=\"none\" stroke=\"#d62728\" stroke-dasharray=\"3,2\"/>\n";
    }
    const char* color = kPalette[k % std::size(kPalette)];
    for (const Point2& q : p.points) {
      os << "<circle cx=\"" << num(f.px(q.x())) << "\" cy=\"" << num(f.py(q.y()))
         << "\" r=\"1.2\" fill=\"" << color << "\" fill-opacity=\"0.5\"/>\n";
    }
    os << "<text x=\"" << num(f.x0) << "\" y=\"" << num(f.y0 + size + 14) << "\">half-width "
       << tick_label(half) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace gsr
