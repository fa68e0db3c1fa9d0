#include "dah/design.hpp"

#include <algorithm>
#include <sstream>

#include "dah/errors.hpp"

namespace dah {

void Frame::set(const std::string& name, Eigen::VectorXd values) {
  if (rows_ == 0 && cols_.empty()) rows_ = static_cast<std::size_t>(values.size());
  if (static_cast<std::size_t>(values.size()) != rows_)
    throw DataError("column '" + name + "' has " + std::to_string(values.size()) + " rows, frame has " + std::to_string(rows_));
  cols_[name] = std::move(values);
}

const Eigen::VectorXd& Frame::column(const std::string& name) const {
  auto it = cols_.find(name);
  if (it == cols_.end()) throw DataError("unknown covariate column '" + name + "'");
  return it->second;
}

std::vector<std::string> Frame::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : cols_) out.push_back(k);
  return out;
}

void Frame::declare_factor(const std::string& name, std::vector<std::string> dummy_columns) {
  for (const auto& c : dummy_columns)
    if (!has(c)) throw DataError("factor '" + name + "' refers to missing column '" + c + "'");
  factors_[name] = std::move(dummy_columns);
}

const std::vector<std::string>* Frame::factor_columns(const std::string& name) const {
  auto it = factors_.find(name);
  return it == factors_.end() ? nullptr : &it->second;
}

Frame Frame::subset(std::span<const std::size_t> rows) const {
  Frame out(rows.size());
  for (const auto& [name, col] : cols_) {
    Eigen::VectorXd v(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col[static_cast<Eigen::Index>(rows[i])];
    out.cols_[name] = std::move(v);
  }
  out.factors_ = factors_;
  return out;
}

Term parse_term(std::string_view label) {
  Term t;
  t.label = std::string(label);
  std::string part;
  std::istringstream is{std::string(label)};
  while (std::getline(is, part, ':')) {
    if (part.empty()) throw ConfigError("malformed term '" + t.label + "'");
    t.variables.push_back(part);
  }
  if (t.variables.empty()) throw ConfigError("empty term");
  return t;
}

std::vector<Term> parse_terms(const std::vector<std::string>& labels) {
  std::vector<Term> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(parse_term(l));
  return out;
}

std::vector<std::string> term_columns(const Term& term, const Frame& frame) {
  std::vector<std::string> cols{""};
  for (const auto& var : term.variables) {
    std::vector<std::string> parts;
    if (const auto* f = frame.factor_columns(var)) {
      parts = *f;
    } else {
      parts = {var};
    }
    std::vector<std::string> next;
    for (const auto& prefix : cols)
      for (const auto& p : parts) next.push_back(prefix.empty() ? p : prefix + ":" + p);
    cols = std::move(next);
  }
  return cols;
}

Eigen::Index DesignMatrix::rank() const {
  if (values.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(values);
  qr.setThreshold(1e-10);
  return qr.rank();
}

namespace {

Eigen::VectorXd column_values(const Frame& frame, const std::string& column) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(frame.rows()));
  std::istringstream is(column);
  std::string part;
  while (std::getline(is, part, ':')) v.array() *= frame.column(part).array();
  return v;
}

}  // namespace

DesignMatrix build_design(const Frame& frame, std::span<const Term> terms, bool intercept) {
  DesignMatrix d;
  if (intercept) d.column_names.push_back(kInterceptName);
  for (const auto& t : terms)
    for (auto& c : term_columns(t, frame)) d.column_names.push_back(std::move(c));
  const auto n = static_cast<Eigen::Index>(frame.rows());
  d.values.resize(n, static_cast<Eigen::Index>(d.column_names.size()));
  for (std::size_t j = 0; j < d.column_names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (d.column_names[j] == kInterceptName) {
      d.values.col(jj).setOnes();
    } else {
      d.values.col(jj) = column_values(frame, d.column_names[j]);
    }
  }
  return d;
}

CompiledDesign::CompiledDesign(const Frame& frame, const std::vector<std::string>& column_names,
                               const std::vector<std::string>& extra_names) {
  for (const auto& name : column_names) {
    std::vector<Factor> factors;
    if (name != kInterceptName) {
      std::istringstream is(name);
      std::string part;
      while (std::getline(is, part, ':')) {
        Factor f;
        auto it = std::find(extra_names.begin(), extra_names.end(), part);
        if (it != extra_names.end()) {
          f.extra = static_cast<int>(it - extra_names.begin());
        } else {
          f.data = frame.column(part).data();
        }
        factors.push_back(f);
      }
    }
    columns_.push_back(std::move(factors));
  }
}

double CompiledDesign::value(std::size_t col, std::size_t row, std::span<const double> extras) const {
  double v = 1.0;
  for (const auto& f : columns_[col]) v *= f.data ? f.data[row] : extras[static_cast<std::size_t>(f.extra)];
  return v;
}

double CompiledDesign::eta(std::size_t row, std::span<const double> extras, const Eigen::VectorXd& beta, double offset) const {
  double e = offset;
  for (std::size_t j = 0; j < columns_.size(); ++j) e += beta[static_cast<Eigen::Index>(j)] * value(j, row, extras);
  return e;
}

}  // namespace dah
