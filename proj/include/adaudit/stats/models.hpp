#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaudit/stats/design.hpp"
#include "adaudit/stats/result.hpp"

namespace adaudit::stats {

struct OlsFit {
  Eigen::VectorXd coefficients;
  std::vector<std::string> labels;
  double rss = 0;
  double df_residual = 0;
  bool exact_fit = false;
  /// Drop-term F test for every term except the intercept.
  std::vector<StatResult> terms;

  double coefficient(const std::string& label) const;
  const StatResult& term(const std::string& name) const;
};

/// Least squares by Householder QR. A term's F compares the full model with
/// the model lacking that term's columns; df2 = n - p, and the result's
/// estimate is the term's extra sum of squares. When the full model
/// fits exactly every F is +inf with p = 0 and the "exact_fit" flag.
OlsFit fit_ols_anova(const DesignMatrix& design, const Eigen::VectorXd& y);

struct LmmFit {
  Eigen::VectorXd fixed_effects;
  std::vector<std::string> labels;
  double sigma2_b = 0;
  double sigma2_e = 0;
  double theta = 0;  // sigma2_b / sigma2_e
  /// -2 x restricted log-likelihood at theta, additive constant dropped.
  double neg2_reml = 0;
  bool boundary_fit = false;
  std::size_t groups = 0;
  /// Wald F per non-intercept term with df2 = n - p ("wald_residual_df");
  /// the estimate field holds the Wald chi-square.
  std::vector<StatResult> terms;

  double fixed_effect(const std::string& label) const;
  const StatResult& term(const std::string& name) const;
};

/// Random-intercept model y = X b + u[group] + e, fit by profiled REML
/// over theta in [0, kLmmThetaMax]. Keeps a pointer to `design`.
class LmmProblem {
 public:
  LmmProblem(const DesignMatrix& design, const Eigen::VectorXd& y,
             const std::vector<std::string>& groups);

  /// Profiled -2 REML log-likelihood at theta (constant dropped).
  double neg2_reml(double theta) const;
  /// Search grid used before local refinement.
  static std::vector<double> grid();
  LmmFit fit() const;

 private:
  struct Gls {
    Eigen::VectorXd beta;
    Eigen::MatrixXd xtvx;  // X' H^-1 X
    double rss = 0;        // r' H^-1 r
    double logdet_h = 0;
  };
  Gls solve(double theta) const;

  const DesignMatrix* design_;
  std::size_t n_ = 0;
  struct Group {
    double size = 0;
    Eigen::VectorXd xsum;  // X_i' 1
    double ysum = 0;
  };
  std::vector<Group> groups_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  double yty_ = 0;
};

inline constexpr double kLmmThetaMax = 1e4;

LmmFit fit_lmm_random_intercept(const DesignMatrix& design, const Eigen::VectorXd& y,
                                const std::vector<std::string>& groups);

}  // namespace adaudit::stats
