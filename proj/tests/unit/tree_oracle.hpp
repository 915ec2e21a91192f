#pragma once

// Brute-force reference for the Gini tree. It never stores a tree: to label a
// query it re-runs the exhaustive split search on the current subset and
// recurses into the side the query falls on. Split quality is compared as the
// exact fraction sum_side 2*ok*nok/n_side (n times the weighted Gini), which
// is a different algebraic form from the one the library maximizes.

#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "weldcam/classifiers.hpp"

namespace weldcam::testing {

struct OracleSample {
  FeatureVector x;
  Label y;
};

class TreeOracle {
 public:
  explicit TreeOracle(std::vector<OracleSample> data) : data_(std::move(data)) {}

  Label predict(const FeatureVector& q) const { return descend(data_, q); }

 private:
  struct Fraction {
    std::int64_t num, den;
    bool less(const Fraction& o) const { return num * o.den < o.num * den; }
  };

  static Label descend(const std::vector<OracleSample>& s, const FeatureVector& q) {
    std::int64_t ok = 0, nok = 0;
    for (const auto& e : s) (e.y == Label::ok ? ok : nok)++;
    const Label majority = nok >= ok ? Label::nok : Label::ok;
    if (ok == 0 || nok == 0 || s.size() < 2) return majority;

    bool found = false;
    std::size_t best_f = 0;
    double best_t = 0;
    Fraction best{0, 1};
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      std::set<double> distinct;
      for (const auto& e : s) distinct.insert(e.x[f]);
      for (auto it = distinct.begin(); std::next(it) != distinct.end(); ++it) {
        const double t = (*it + *std::next(it)) / 2;
        std::int64_t lo = 0, ln = 0, ro = 0, rn = 0;
        for (const auto& e : s) {
          if (e.x[f] <= t) {
            (e.y == Label::ok ? lo : ln)++;
          } else {
            (e.y == Label::ok ? ro : rn)++;
          }
        }
        const std::int64_t nl = lo + ln, nr = ro + rn;
        const Fraction impurity{2 * lo * ln * nr + 2 * ro * rn * nl, nl * nr};
        if (!found || impurity.less(best)) {
          found = true;
          best = impurity;
          best_f = f;
          best_t = t;
        }
      }
    }
    if (!found) return majority;
    std::vector<OracleSample> side;
    const bool go_left = q[best_f] <= best_t;
    for (const auto& e : s) {
      if ((e.x[best_f] <= best_t) == go_left) side.push_back(e);
    }
    return descend(side, q);
  }

  std::vector<OracleSample> data_;
};

/// All 64 points of the {0,1,2,3}^3 grid, with rcr scaled into [0,100].
inline std::vector<FeatureVector> oracle_grid() {
  std::vector<FeatureVector> g;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c) g.push_back({double(a), double(b), 10.0 * c});
  return g;
}

}  // namespace weldcam::testing
