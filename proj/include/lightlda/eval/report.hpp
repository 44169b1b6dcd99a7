#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/corpus/data_block.hpp"
#include "lightlda/engine/config.hpp"

namespace lightlda::eval {

inline constexpr const char* kMetricsHeader =
    "iteration,seconds,tokens_per_sec,doc_ll,word_ll,total_ll,nnz,fetch_wait_frac,"
    "tokens,changed,accept_rate,compute_seconds,fetch_wait_seconds";

inline std::string format_csv_row(const engine::IterationReport& r) {
  std::ostringstream os;
  os.precision(17);
  auto ll = [&](double v) {
    if (r.has_likelihood) {
      os << v;
    }
  };
  os << r.iteration << ',' << r.seconds << ',' << r.tokens_per_sec() << ',';
  ll(r.doc_loglik);
  os << ',';
  ll(r.word_loglik);
  os << ',';
  ll(r.total_loglik);
  os << ',' << r.nonzeros << ',' << r.fetch_wait_frac() << ',' << r.tokens << ',' << r.changed
     << ',' << r.accept_rate << ',' << r.compute_seconds << ',' << r.fetch_wait_seconds;
  return os.str();
}

/// Appends report rows to a CSV file, writing the header for a new file.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path, bool append = false) {
    const bool fresh = !append || !std::filesystem::exists(path);
    out_.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!out_) throw DataError("cannot open metrics file " + path.string());
    if (fresh) out_ << kMetricsHeader << '\n';
  }
  void write(const engine::IterationReport& r) { out_ << format_csv_row(r) << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

/// Drops rows for iterations >= `iterations` (left by a run killed after its
/// last checkpoint).
inline void truncate_metrics(const std::filesystem::path& path, std::uint32_t iterations) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  if (std::getline(in, line)) kept += line + '\n';
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoul(line.substr(0, line.find(','))) < iterations) kept += line + '\n';
  }
  in.close();
  corpus::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(kept.data()), kept.size()));
}

/// One parsed metrics CSV: column name -> values (NaN for empty cells).
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DataError("metrics column '" + name + "' missing");
    const auto c = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(c < r.size() ? r[c] : std::nan(""));
    return out;
  }
};

inline MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  MetricsTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty metrics file " + path.string());
  std::stringstream hs(line);
  for (std::string col; std::getline(hs, col, ',');) t.columns.push_back(col);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell.empty() ? std::nan("") : std::stod(cell));
    if (!line.empty() && line.back() == ',') row.push_back(std::nan(""));
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// Minimal SVG line chart.
inline std::string render_svg(const std::vector<Series>& series, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel) {
  const double W = 720, H = 440, L = 90, R = 170, T = 40, B = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.x[i]) || std::isnan(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4, yv = ymin + (ymax - ymin) * i / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
       << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">"
     << xlabel << "</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (std::isnan(series[s].x[i]) || std::isnan(series[s].y[i])) continue;
      os << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" fill=\"" << color
       << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace lightlda::eval
