#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adaudit::stats {

/// A model term and the design columns it owns.
struct Term {
  std::string name;
  std::vector<int> columns;
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> columns;  // "(Intercept)", "race[black]", "race[black]:gender[man]", ...
  std::vector<Term> terms;           // first term is the intercept
  /// Coding decisions: reference levels, dropped empty columns.
  std::vector<std::string> notes;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  const Term& term(const std::string& name) const;
};

/// Builds treatment-coded designs. Categorical factors drop their most
/// frequent level as reference (ties go to the lexicographically first
/// level). Interactions are products of the two factors' dummies; columns
/// that are identically zero are dropped and noted.
class DesignBuilder {
 public:
  explicit DesignBuilder(std::size_t rows);

  DesignBuilder& categorical(std::string name, std::vector<std::string> values);
  DesignBuilder& numeric(std::string name, std::vector<double> values);
  DesignBuilder& flag(std::string name, const std::vector<bool>& values);
  /// Interaction of two previously added categorical or flag terms.
  DesignBuilder& interaction(const std::string& a, const std::string& b);

  DesignMatrix build() const;

 private:
  struct Block {
    std::string name;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> cols;
  };
  const Block& find(const std::string& name) const;

  std::size_t rows_;
  std::vector<Block> blocks_;
  std::vector<std::string> notes_;
};

/// Throws Error(kRankDeficient) naming every column that is a linear
/// combination of the columns before it.
void require_full_rank(const DesignMatrix& d);

}  // namespace adaudit::stats
