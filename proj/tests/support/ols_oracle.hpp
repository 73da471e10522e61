#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adaudit/common/rng.hpp"
#include "adaudit/stats/design.hpp"

namespace adaudit::fixtures {

using stats::DesignMatrix;
using stats::Term;

// Normal equations solved by Gauss-Jordan elimination with partial
// pivoting in long double.
inline std::vector<long double> normal_equations(const std::vector<std::vector<double>>& x,
                                          const std::vector<double>& y,
                                          const std::vector<int>& cols) {
  const std::size_t p = cols.size();
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0));
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += (long double)x[r][cols[i]] * x[r][cols[j]];
      a[i][p] += (long double)x[r][cols[i]] * y[r];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<long double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

inline long double oracle_rss(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                       const std::vector<int>& cols) {
  const auto beta = normal_equations(x, y, cols);
  long double rss = 0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    long double fit = 0;
    for (std::size_t i = 0; i < cols.size(); ++i) fit += beta[i] * x[r][cols[i]];
    rss += (y[r] - fit) * (y[r] - fit);
  }
  return rss;
}

struct RandomProblem {
  DesignMatrix design;
  Eigen::VectorXd y;
  std::vector<std::vector<double>> rows;
};

inline RandomProblem random_problem(Rng& rng, int n, int p) {
  RandomProblem prob;
  prob.design.x.resize(n, p);
  prob.design.columns.push_back("(Intercept)");
  prob.design.terms.push_back({"(Intercept)", {0}});
  for (int r = 0; r < n; ++r) prob.design.x(r, 0) = 1;
  // Split the remaining columns into terms of one to three columns.
  int c = 1;
  while (c < p) {
    Term t{"t" + std::to_string(prob.design.terms.size()), {}};
    const int width = std::min(p - c, 1 + static_cast<int>(rng.below(3)));
    for (int k = 0; k < width; ++k, ++c) {
      t.columns.push_back(c);
      prob.design.columns.push_back("x" + std::to_string(c));
      const bool dummy = rng.below(2) == 0;
      for (int r = 0; r < n; ++r) {
        prob.design.x(r, c) = dummy ? static_cast<double>(rng.below(2)) : rng.normal() * 3;
      }
    }
    prob.design.terms.push_back(std::move(t));
  }
  prob.y.resize(n);
  prob.rows.assign(n, std::vector<double>(p));
  for (int r = 0; r < n; ++r) {
    double v = rng.normal();
    for (int j = 0; j < p; ++j) {
      v += (j % 3 - 1) * 0.7 * prob.design.x(r, j);
      prob.rows[r][j] = prob.design.x(r, j);
    }
    prob.y(r) = v;
  }
  return prob;
}
}  // namespace adaudit::fixtures
