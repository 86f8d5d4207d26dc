#include "flatpi/error.hpp"
#include "flatpi/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flatpi::sim {
namespace {

// shortest round-trip form, so equal doubles print equal bytes
void put(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

struct Series {
  std::string label;
  std::vector<double> y;
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void panel(std::ostringstream& os, const std::vector<double>& t, const std::vector<Series>& series, double top,
           const std::string& title, const std::vector<double>& guides) {
  const double left = 70, width = 620, height = 170;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double g : guides) lo = std::min(lo, g), hi = std::max(hi, g);
  if (!std::isfinite(lo)) lo = -1, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double t0 = t.front(), t1 = std::max(t.back(), t0 + 1e-12);
  auto X = [&](double v) { return left + width * (v - t0) / (t1 - t0); };
  auto Y = [&](double v) { return top + height * (1.0 - (v - lo) / (hi - lo)); };

  os << "<rect x='" << left << "' y='" << top << "' width='" << width << "' height='" << height
     << "' fill='none' stroke='#888'/>\n";
  os << "<text x='" << left << "' y='" << top - 6 << "' font-size='13'>" << title << "</text>\n";
  os << "<text x='" << left - 6 << "' y='" << top + 10 << "' font-size='10' text-anchor='end'>" << fmt(hi) << "</text>\n";
  os << "<text x='" << left - 6 << "' y='" << top + height << "' font-size='10' text-anchor='end'>" << fmt(lo)
     << "</text>\n";
  for (double g : guides)
    os << "<line x1='" << left << "' x2='" << left + width << "' y1='" << Y(g) << "' y2='" << Y(g)
       << "' stroke='#aaa' stroke-dasharray='4 3'/>\n";
  const std::size_t stride = std::max<std::size_t>(1, t.size() / 1500);
  for (std::size_t s = 0; s < series.size(); ++s) {
    os << "<polyline fill='none' stroke-width='1.2' stroke='" << kColors[s % 5] << "' points='";
    for (std::size_t k = 0; k < t.size(); k += stride)
      if (std::isfinite(series[s].y[k])) os << X(t[k]) << ',' << Y(series[s].y[k]) << ' ';
    os << "'/>\n";
    os << "<text x='" << left + width + 8 << "' y='" << top + 14 * (s + 1) << "' font-size='11' fill='"
       << kColors[s % 5] << "'>" << series[s].label << "</text>\n";
  }
  os << "<text x='" << left + width << "' y='" << top + height + 14 << "' font-size='10' text-anchor='end'>t = "
     << fmt(t1) << " s</text>\n";
}

}  // namespace

std::string format_csv(const SimTrace& t) {
  std::string out;
  const int n = t.states.empty() ? 0 : static_cast<int>(t.states.front().size());
  out += "t";
  for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",z" + std::to_string(i);
  out += ",u,v,V,r_f\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    put(out, t.times[k]);
    for (int i = 0; i < n; ++i) out += ',', put(out, t.states[k][i]);
    for (int i = 0; i < n; ++i) out += ',', put(out, t.flat_states[k][i]);
    out += ',', put(out, t.inputs[k]);
    out += ',', put(out, t.virtual_inputs[k]);
    out += ',', put(out, t.clf_values[k]);
    out += ',', put(out, t.references ? (*t.references)[k] : kNaN);
    out += '\n';
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::FormatError, "cannot open " + path + " for writing");
  f << text;
  if (!f) throw Error(ErrorCode::FormatError, "write failed: " + path);
}

void write_csv(const SimTrace& t, const std::string& path) { write_text(path, format_csv(t)); }

std::string format_svg(const SimTrace& t, const std::string& title, double u_bar) {
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='800' height='700' font-family='sans-serif'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='400' y='22' font-size='15' text-anchor='middle'>" << title << "</text>\n";
  if (t.size() == 0) {
    os << "</svg>\n";
    return os.str();
  }
  const int n = static_cast<int>(t.states.front().size());
  std::vector<Series> xs(n);
  for (int i = 0; i < n; ++i) {
    xs[i].label = "x" + std::to_string(i + 1);
    for (const auto& x : t.states) xs[i].y.push_back(x[i]);
  }
  panel(os, t.times, xs, 50, "state", {});
  panel(os, t.times, {{"u", t.inputs}}, 270, "input", {-u_bar, u_bar});
  panel(os, t.times, {{"V", t.clf_values}}, 490, "Lyapunov value", {});
  os << "</svg>\n";
  return os.str();
}

}  // namespace flatpi::sim
