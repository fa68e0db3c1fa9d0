#pragma once

// Covariate frames, model terms and design matrices.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dah {

inline constexpr const char* kInterceptName = "(Intercept)";

/// Column-oriented covariate table. Factors are stored as reference-cell dummy
/// columns and registered under the factor name so a term can refer to the set.
class Frame {
 public:
  explicit Frame(std::size_t rows = 0) : rows_(rows) {}

  std::size_t rows() const noexcept { return rows_; }
  void set(const std::string& name, Eigen::VectorXd values);
  bool has(const std::string& name) const { return cols_.count(name) > 0; }
  const Eigen::VectorXd& column(const std::string& name) const;
  std::vector<std::string> names() const;

  void declare_factor(const std::string& name, std::vector<std::string> dummy_columns);
  /// Dummy columns of a declared factor, or nullptr for plain variables.
  const std::vector<std::string>* factor_columns(const std::string& name) const;
  const std::map<std::string, std::vector<std::string>>& factors() const noexcept { return factors_; }

  Frame subset(std::span<const std::size_t> rows) const;

 private:
  std::size_t rows_;
  std::map<std::string, Eigen::VectorXd> cols_;
  std::map<std::string, std::vector<std::string>> factors_;
};

/// A model term: a main effect ("sex", "country") or an interaction ("bmi:treatment").
struct Term {
  std::string label;
  std::vector<std::string> variables;

  bool interaction() const noexcept { return variables.size() > 1; }
  bool operator==(const Term& o) const { return label == o.label; }
};

Term parse_term(std::string_view label);
std::vector<Term> parse_terms(const std::vector<std::string>& labels);

/// Design column names a term expands to, e.g. "country" -> {country_AU, country_NZ}.
std::vector<std::string> term_columns(const Term& term, const Frame& frame);

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index rank() const;
  bool full_rank() const { return rank() == cols(); }
};

/// Intercept first, then the expanded columns of each term in order.
DesignMatrix build_design(const Frame& frame, std::span<const Term> terms, bool intercept = true);

/// Column-name -> per-row evaluator resolved once against a frame, for fast
/// repeated linear predictors during simulation. Variables missing from the
/// frame resolve to slots in a caller-provided `extras` array.
class CompiledDesign {
 public:
  CompiledDesign() = default;
  CompiledDesign(const Frame& frame, const std::vector<std::string>& column_names,
                 const std::vector<std::string>& extra_names = {});

  std::size_t cols() const noexcept { return columns_.size(); }
  double value(std::size_t col, std::size_t row, std::span<const double> extras) const;
  double eta(std::size_t row, std::span<const double> extras, const Eigen::VectorXd& beta, double offset = 0.0) const;

 private:
  struct Factor {
    const double* data = nullptr;  // frame column
    int extra = -1;                // or index into extras
  };
  std::vector<std::vector<Factor>> columns_;  // empty product = intercept
};

}  // namespace dah
