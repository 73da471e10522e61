#include "adaudit/stats/models.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "adaudit/common/error.hpp"
#include "adaudit/stats/distributions.hpp"

namespace adaudit::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd without_columns(const Eigen::MatrixXd& x, const std::vector<int>& drop) {
  Eigen::MatrixXd out(x.rows(), x.cols() - static_cast<Eigen::Index>(drop.size()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (std::find(drop.begin(), drop.end(), static_cast<int>(j)) == drop.end()) {
      out.col(k++) = x.col(j);
    }
  }
  return out;
}

double residual_ss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.cols() == 0) return y.squaredNorm();
  const Eigen::VectorXd beta = x.householderQr().solve(y);
  return (y - x * beta).squaredNorm();
}

void check_shapes(const DesignMatrix& d, const Eigen::VectorXd& y) {
  if (y.size() != d.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "response length differs from design rows");
  }
  if (d.rows() <= d.cols()) {
    throw Error(ErrorCode::kPrecondition, "need more observations than model columns");
  }
  require_full_rank(d);
}

const StatResult& find_term(const std::vector<StatResult>& terms, const std::string& name) {
  for (const auto& t : terms) {
    if (t.term == name) return t;
  }
  throw Error(ErrorCode::kNotFound, "no test for term '" + name + "'");
}

double find_coef(const Eigen::VectorXd& v, const std::vector<std::string>& labels,
                 const std::string& label) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return v(static_cast<Eigen::Index>(i));
  }
  throw Error(ErrorCode::kNotFound, "no coefficient '" + label + "'");
}

// Brent's minimizer on [a, b].
template <class F>
double brent_minimize(F&& f, double a, double b, double tol) {
  constexpr double kGold = 0.3819660112501051;
  double x = a + kGold * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0, e = 0;
  for (int iter = 0; iter < 200; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol * std::fabs(x) + 1e-14;
    const double tol2 = 2 * tol1;
    if (std::fabs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::fabs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2 * (q - r);
      if (q > 0) p = -p;
      q = std::fabs(q);
      const double etemp = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = x < m ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = (x >= m ? a : b) - x;
      d = kGold * e;
    }
    const double u = std::fabs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      (u >= x ? a : b) = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      (u < x ? a : b) = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return x;
}

}  // namespace

double OlsFit::coefficient(const std::string& label) const {
  return find_coef(coefficients, labels, label);
}

const StatResult& OlsFit::term(const std::string& name) const { return find_term(terms, name); }

OlsFit fit_ols_anova(const DesignMatrix& design, const Eigen::VectorXd& y) {
  check_shapes(design, y);
  OlsFit fit;
  fit.labels = design.columns;
  fit.coefficients = design.x.householderQr().solve(y);
  fit.rss = (y - design.x * fit.coefficients).squaredNorm();
  fit.df_residual = static_cast<double>(design.rows() - design.cols());
  fit.exact_fit = fit.rss <= 1e-20 * std::max(1.0, y.squaredNorm());
  for (std::size_t t = 1; t < design.terms.size(); ++t) {
    const auto& term = design.terms[t];
    const double rss_reduced = residual_ss(without_columns(design.x, term.columns), y);
    StatResult r;
    r.procedure = "ols_drop_term_f";
    r.term = term.name;
    r.estimate = rss_reduced - fit.rss;
    r.df = static_cast<double>(term.columns.size());
    r.df2 = fit.df_residual;
    r.sides = Sides::kOne;
    r.n = static_cast<std::size_t>(design.rows());
    if (fit.exact_fit) {
      r.statistic = kInf;
      r.p_value = 0;
      r.flags.push_back("exact_fit");
    } else {
      r.statistic = (r.estimate / r.df) / (fit.rss / fit.df_residual);
      r.p_value = f_sf(r.statistic, r.df, *r.df2);
    }
    fit.terms.push_back(std::move(r));
  }
  return fit;
}

double LmmFit::fixed_effect(const std::string& label) const {
  return find_coef(fixed_effects, labels, label);
}

const StatResult& LmmFit::term(const std::string& name) const { return find_term(terms, name); }

LmmProblem::LmmProblem(const DesignMatrix& design, const Eigen::VectorXd& y,
                       const std::vector<std::string>& groups)
    : design_(&design), n_(static_cast<std::size_t>(design.rows())) {
  check_shapes(design, y);
  if (groups.size() != n_) {
    throw Error(ErrorCode::kInvalidArgument, "group labels differ in length from response");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n_; ++i) {
    auto [it, fresh] = index.emplace(groups[i], groups_.size());
    if (fresh) groups_.push_back({0, Eigen::VectorXd::Zero(design.cols()), 0});
    auto& g = groups_[it->second];
    g.size += 1;
    g.xsum += design.x.row(static_cast<Eigen::Index>(i)).transpose();
    g.ysum += y(static_cast<Eigen::Index>(i));
  }
  if (groups_.size() < 2) throw Error(ErrorCode::kPrecondition, "need at least 2 groups");
  if (std::none_of(groups_.begin(), groups_.end(), [](const Group& g) { return g.size >= 2; })) {
    throw Error(ErrorCode::kPrecondition, "need a group with at least 2 observations");
  }
  xtx_ = design.x.transpose() * design.x;
  xty_ = design.x.transpose() * y;
  yty_ = y.squaredNorm();
}

// With H = I + theta Z Z', each group block inverts as
// I - w 1 1' with w = theta / (1 + theta n_i), so every quantity is a
// correction of the OLS cross products by per-group sums.
LmmProblem::Gls LmmProblem::solve(double theta) const {
  Gls g;
  g.xtvx = xtx_;
  Eigen::VectorXd c = xty_;
  double q = yty_;
  for (const auto& grp : groups_) {
    const double w = theta / (1 + theta * grp.size);
    g.xtvx.noalias() -= w * grp.xsum * grp.xsum.transpose();
    c.noalias() -= w * grp.ysum * grp.xsum;
    q -= w * grp.ysum * grp.ysum;
    g.logdet_h += std::log1p(theta * grp.size);
  }
  g.beta = g.xtvx.ldlt().solve(c);
  g.rss = std::max(q - c.dot(g.beta), 0.0);
  return g;
}

double LmmProblem::neg2_reml(double theta) const {
  const Gls g = solve(theta);
  const double dof = static_cast<double>(n_) - static_cast<double>(design_->cols());
  const Eigen::LLT<Eigen::MatrixXd> llt(g.xtvx);
  double logdet_a = 0;
  for (Eigen::Index i = 0; i < g.xtvx.rows(); ++i) logdet_a += 2 * std::log(llt.matrixL()(i, i));
  if (g.rss <= 0) return -kInf;
  return dof * std::log(g.rss / dof) + g.logdet_h + logdet_a;
}

std::vector<double> LmmProblem::grid() {
  std::vector<double> out{0.0};
  for (int k = -36; k <= 24; ++k) out.push_back(std::pow(10.0, k / 6.0));
  return out;
}

LmmFit LmmProblem::fit() const {
  const auto pts = grid();
  std::size_t best = 0;
  double best_val = kInf;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double v = neg2_reml(pts[i]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double lo = pts[best == 0 ? 0 : best - 1];
  const double hi = pts[std::min(best + 1, pts.size() - 1)];
  double theta = pts[best];
  if (hi > lo) {
    const double cand = brent_minimize([this](double t) { return neg2_reml(t); }, lo, hi, 1e-10);
    const double cand_val = neg2_reml(cand);
    if (cand_val < best_val) {
      theta = cand;
      best_val = cand_val;
    }
  }

  const Gls g = solve(theta);
  const double dof = static_cast<double>(n_) - static_cast<double>(design_->cols());
  LmmFit fit;
  fit.labels = design_->columns;
  fit.fixed_effects = g.beta;
  fit.theta = theta;
  fit.sigma2_e = g.rss / dof;
  fit.sigma2_b = theta * fit.sigma2_e;
  fit.neg2_reml = best_val;
  fit.boundary_fit = theta <= 0 || theta >= kLmmThetaMax;
  fit.groups = groups_.size();

  const Eigen::MatrixXd cov = fit.sigma2_e * g.xtvx.inverse();
  for (std::size_t t = 1; t < design_->terms.size(); ++t) {
    const auto& term = design_->terms[t];
    const auto q = static_cast<Eigen::Index>(term.columns.size());
    Eigen::VectorXd b(q);
    Eigen::MatrixXd c(q, q);
    for (Eigen::Index i = 0; i < q; ++i) {
      b(i) = g.beta(term.columns[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < q; ++j) {
        c(i, j) = cov(term.columns[static_cast<std::size_t>(i)],
                      term.columns[static_cast<std::size_t>(j)]);
      }
    }
    StatResult r;
    r.procedure = "lmm_wald_f";
    r.term = term.name;
    r.estimate = b.dot(c.ldlt().solve(b));
    r.df = static_cast<double>(q);
    r.df2 = dof;
    r.statistic = r.estimate / r.df;
    r.p_value = f_sf(r.statistic, r.df, dof);
    r.sides = Sides::kOne;
    r.n = n_;
    r.flags.push_back("wald_residual_df");
    if (fit.boundary_fit) r.flags.push_back("boundary_fit");
    fit.terms.push_back(std::move(r));
  }
  return fit;
}

LmmFit fit_lmm_random_intercept(const DesignMatrix& design, const Eigen::VectorXd& y,
                                const std::vector<std::string>& groups) {
  return LmmProblem(design, y, groups).fit();
}

}  // namespace adaudit::stats
