#include "adaudit/stats/design.hpp"

#include <algorithm>
#include <map>

#include "adaudit/common/error.hpp"

namespace adaudit::stats {

const Term& DesignMatrix::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::kNotFound, "no model term '" + name + "'");
}

DesignBuilder::DesignBuilder(std::size_t rows) : rows_(rows) {}

DesignBuilder& DesignBuilder::categorical(std::string name, std::vector<std::string> values) {
  if (values.size() != rows_) {
    throw Error(ErrorCode::kInvalidArgument, "factor '" + name + "' has wrong length");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) ++counts[v];
  // Most frequent level is the reference; map order breaks ties.
  auto ref = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > ref->second) ref = it;
  }
  notes_.push_back(name + ": reference level '" + ref->first + "' (" +
                   std::to_string(ref->second) + " rows)");
  Block b{name, {}, {}};
  for (const auto& [level, count] : counts) {
    if (level == ref->first) continue;
    b.labels.push_back(name + "[" + level + "]");
    std::vector<double> col(rows_);
    for (std::size_t i = 0; i < rows_; ++i) col[i] = values[i] == level ? 1.0 : 0.0;
    b.cols.push_back(std::move(col));
  }
  blocks_.push_back(std::move(b));
  return *this;
}

DesignBuilder& DesignBuilder::numeric(std::string name, std::vector<double> values) {
  if (values.size() != rows_) {
    throw Error(ErrorCode::kInvalidArgument, "covariate '" + name + "' has wrong length");
  }
  blocks_.push_back({name, {name}, {std::move(values)}});
  return *this;
}

DesignBuilder& DesignBuilder::flag(std::string name, const std::vector<bool>& values) {
  if (values.size() != rows_) {
    throw Error(ErrorCode::kInvalidArgument, "flag '" + name + "' has wrong length");
  }
  std::vector<double> col(rows_);
  for (std::size_t i = 0; i < rows_; ++i) col[i] = values[i] ? 1.0 : 0.0;
  blocks_.push_back({name, {name}, {std::move(col)}});
  return *this;
}

const DesignBuilder::Block& DesignBuilder::find(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorCode::kNotFound, "interaction refers to unknown term '" + name + "'");
}

DesignBuilder& DesignBuilder::interaction(const std::string& a, const std::string& b) {
  const Block& ba = find(a);
  const Block& bb = find(b);
  Block out{a + ":" + b, {}, {}};
  for (std::size_t i = 0; i < ba.cols.size(); ++i) {
    for (std::size_t j = 0; j < bb.cols.size(); ++j) {
      std::vector<double> col(rows_);
      for (std::size_t r = 0; r < rows_; ++r) col[r] = ba.cols[i][r] * bb.cols[j][r];
      out.labels.push_back(ba.labels[i] + ":" + bb.labels[j]);
      out.cols.push_back(std::move(col));
    }
  }
  blocks_.push_back(std::move(out));
  return *this;
}

DesignMatrix DesignBuilder::build() const {
  DesignMatrix d;
  d.notes = notes_;
  std::vector<const std::vector<double>*> kept;
  std::vector<double> ones(rows_, 1.0);
  kept.push_back(&ones);
  d.columns.push_back("(Intercept)");
  d.terms.push_back({"(Intercept)", {0}});
  for (const auto& b : blocks_) {
    Term t{b.name, {}};
    for (std::size_t i = 0; i < b.cols.size(); ++i) {
      const auto& col = b.cols[i];
      if (std::all_of(col.begin(), col.end(), [](double v) { return v == 0; })) {
        d.notes.push_back("dropped empty column " + b.labels[i]);
        continue;
      }
      t.columns.push_back(static_cast<int>(kept.size()));
      kept.push_back(&col);
      d.columns.push_back(b.labels[i]);
    }
    if (t.columns.empty()) {
      d.notes.push_back("term " + b.name + " has no columns");
      continue;
    }
    d.terms.push_back(std::move(t));
  }
  d.x.resize(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    for (std::size_t r = 0; r < rows_; ++r) {
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*kept[c])[r];
    }
  }
  return d;
}

void require_full_rank(const DesignMatrix& d) {
  std::vector<std::string> collinear;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    Eigen::MatrixXd sub(d.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = d.x.col(kept[k]);
    sub.col(sub.cols() - 1) = d.x.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() == sub.cols()) {
      kept.push_back(j);
    } else {
      collinear.push_back(d.columns[static_cast<std::size_t>(j)]);
    }
  }
  if (!collinear.empty()) {
    std::string msg = "design matrix is rank deficient; collinear columns:";
    for (const auto& c : collinear) msg += " " + c;
    throw Error(ErrorCode::kRankDeficient, msg);
  }
}

}  // namespace adaudit::stats
