#include <algorithm>
#include <cstdio>
#include <tuple>
#include <fstream>
#include <map>
#include <sstream>

#include "weldcam/csv.hpp"
#include "weldcam/errors.hpp"
#include "weldcam/pipeline.hpp"

namespace weldcam {

using io::format_double;

std::string report_csv(const AccuracyReport& report) {
  std::ostringstream out;
  out << "seed,weld,extractor,decision,classifier,accuracy,tp,tn,fp,fn,delta_vs_old\n";
  for (const auto& r : report.rows) {
    const Confusion& c = r.confusion;
    out << r.seed << ',' << r.weld << ',' << to_string(r.extractor) << ',' << r.decision << ','
        << r.classifier << ',' << format_double(c.accuracy()) << ',' << c.tp << ',' << c.tn << ','
        << c.fp << ',' << c.fn << ',' << format_double(r.delta_vs_old) << '\n';
  }
  return out.str();
}

std::string rcr_csv(const AccuracyReport& report) {
  std::ostringstream out;
  out << "seed,weld,extractor,mean_rcr_ok,mean_rcr_nok\n";
  for (const auto& r : report.rcr) {
    out << r.seed << ',' << r.weld << ',' << to_string(r.extractor) << ',' << format_double(r.mean_rcr_ok)
        << ',' << format_double(r.mean_rcr_nok) << '\n';
  }
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SpecError("cannot write " + path.string());
  f << text;
  if (!f) throw SpecError("failed writing " + path.string());
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const AccuracyReport& report) {
  write_text(path, report_csv(report));
}

void write_rcr_csv(const std::filesystem::path& path, const AccuracyReport& report) {
  write_text(path, rcr_csv(report));
}

std::string format_report_table(const AccuracyReport& report) {
  // Column order follows first appearance; rows are (weld, extractor).
  std::vector<std::string> columns;
  std::vector<std::pair<int, ModelFamily>> cells;
  std::map<std::pair<std::pair<int, ModelFamily>, std::string>, std::pair<double, std::size_t>> sums;
  for (const auto& r : report.rows) {
    const std::string col = r.decision == "old" ? "old" : r.classifier;
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    const auto cell = std::make_pair(r.weld, r.extractor);
    if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    auto& s = sums[{cell, col}];
    s.first += r.confusion.accuracy();
    ++s.second;
  }

  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-6s %-16s", "weld", "extractor");
  out << buf;
  for (const auto& c : columns) {
    std::snprintf(buf, sizeof buf, " %10s", c.c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof buf, "%-6d %-16s", cell.first, to_string(cell.second).c_str());
    out << buf;
    for (const auto& c : columns) {
      const auto it = sums.find({cell, c});
      const std::string v = it == sums.end() ? "-" : percent(it->second.first / it->second.second);
      std::snprintf(buf, sizeof buf, " %10s", v.c_str());
      out << buf;
    }
    out << '\n';
  }
  out << "mean accuracy (%) over " << report.seeds.size() << " seed(s)\n";
  return out.str();
}

CheckOutcome check_report(const AccuracyReport& report) {
  CheckOutcome out;
  struct Cell {
    double old = -1.0;
    double best_new = -1.0;
  };
  std::map<std::tuple<std::uint64_t, int, ModelFamily>, Cell> cells;
  for (const auto& r : report.rows) {
    Cell& c = cells[{r.seed, r.weld, r.extractor}];
    const double acc = r.confusion.accuracy();
    if (r.decision == "old") c.old = acc;
    else c.best_new = std::max(c.best_new, acc);
  }

  double improvement = 0.0;
  std::size_t not_worse = 0;
  for (const auto& [key, c] : cells) {
    const auto& [seed, weld, family] = key;
    const bool ok = c.best_new >= c.old;
    not_worse += ok;
    improvement += c.best_new - c.old;
    out.lines.push_back(std::string(ok ? "PASS" : "FAIL") + " seed " + std::to_string(seed) + " weld " +
                        std::to_string(weld) + " " + to_string(family) + ": best hybrid " +
                        percent(c.best_new) + "% vs argmax " + percent(c.old) + "%");
  }
  if (cells.empty()) {
    out.passed = false;
    out.lines.push_back("FAIL report has no cells");
    return out;
  }
  improvement /= static_cast<double>(cells.size());
  const bool mean_ok = improvement > 0.0;
  char gain[32];
  std::snprintf(gain, sizeof gain, "%+.2f", 100.0 * improvement);
  out.lines.push_back(std::string(mean_ok ? "PASS" : "FAIL") + " mean improvement " + gain + " points");

  std::size_t rcr_hits = 0;
  for (const auto& r : report.rcr) rcr_hits += r.mean_rcr_nok < r.mean_rcr_ok;
  // at least 4 of every 5 cells
  const bool rcr_ok = !report.rcr.empty() && 5 * rcr_hits >= 4 * report.rcr.size();
  out.lines.push_back(std::string(rcr_ok ? "PASS" : "FAIL") + " mean RCR NOK < OK in " +
                      std::to_string(rcr_hits) + " of " + std::to_string(report.rcr.size()) + " cells");

  out.passed = not_worse == cells.size() && mean_ok && rcr_ok;
  return out;
}

}  // namespace weldcam
