#include "moincl_tools/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace moincl::cli {
namespace {

constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#17becf"};

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

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

// Round the axis maximum up to 1, 2 or 5 times a power of ten.
double nice_ceiling(double v) {
  if (v <= 0) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (v <= m * p) return m * p;
  }
  return 10 * p;
}

}  // namespace

std::string score_lines_svg(const ScoreMatrix& m, const std::string& title) {
  std::ostringstream os;
  header(os, title);
  const int T = m.size();
  double ymax = 0;
  for (int i = 1; i <= T; ++i) {
    for (int j = i; j <= T; ++j) {
      if (auto v = m.get(i, j)) ymax = std::max(ymax, *v);
    }
  }
  ymax = nice_ceiling(ymax);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto x = [&](int step) { return kLeft + (T > 1 ? pw * (step - 1) / (T - 1) : pw / 2); };
  auto y = [&](double v) { return kTop + ph * (1.0 - v / ymax); };

  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (int j = 1; j <= T; ++j) {
    os << "<text x=\"" << x(j) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">S" << j
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">training step</text>\n";

  for (int i = 1; i <= T; ++i) {
    const char* color = kColors[static_cast<std::size_t>(i - 1) % kColors.size()];
    std::string points;
    for (int j = i; j <= T; ++j) {
      if (auto v = m.get(i, j)) points += std::to_string(x(j)) + "," + std::to_string(y(*v)) + " ";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points
       << "\"/>\n";
    const double ly = kTop + 16.0 * i;
    os << "<rect x=\"" << kW - kRight + 14 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << color << "\"/>\n";
    os << "<text x=\"" << kW - kRight + 30 << "\" y=\"" << ly << "\">"
       << escape(m.tasks()[static_cast<std::size_t>(i - 1)].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string forgetting_bars_svg(const Aggregates& a, const ScoreMatrix& m, const std::string& title) {
  std::ostringstream os;
  header(os, title);
  const auto& f = a.per_task_forget;
  double span = 1.0;
  for (double v : f) span = std::max(span, std::abs(v));
  span = nice_ceiling(span);
  const bool any_negative = std::any_of(f.begin(), f.end(), [](double v) { return v < 0; });
  const double lo = any_negative ? -span : 0.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto y = [&](double v) { return kTop + ph * (span - v) / (span - lo); };
  const double slot = f.empty() ? pw : pw / static_cast<double>(f.size());

  os << "<line x1=\"" << kLeft << "\" y1=\"" << y(0) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << y(0)
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y(span) + 4 << "\" text-anchor=\"end\">" << span
     << "%</text>\n";
  if (any_negative) {
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y(lo) + 4 << "\" text-anchor=\"end\">" << lo
       << "%</text>\n";
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double x0 = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double top = std::min(y(0), y(f[i]));
    const double height = std::abs(y(f[i]) - y(0));
    os << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << slot * 0.7 << "\" height=\"" << height
       << "\" fill=\"" << kColors[i % kColors.size()] << "\"/>\n";
    os << "<text x=\"" << x0 + slot * 0.35 << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
       << escape(m.tasks()[i].name) << "</text>\n";
    std::ostringstream label;
    label.setf(std::ios::fixed);
    label.precision(2);
    label << f[i] << "%";
    os << "<text x=\"" << x0 + slot * 0.35 << "\" y=\"" << top - 4 << "\" text-anchor=\"middle\">"
       << label.str() << "</text>\n";
  }
  if (a.avg_forget) {
    os << "<text x=\"" << kW - kRight + 14 << "\" y=\"" << kTop + 16 << "\">avg " << *a.avg_forget
       << "%</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace moincl::cli
