#include "arccm/poly.h"

#include <stdexcept>
#include <string>

namespace arccm {

namespace {

// Appends every exponent vector of total degree `remaining` over
// `vars[pos..]`, first variable's exponent descending (lexicographic).
void Compositions(const std::vector<int>& vars, std::size_t pos, int remaining,
                  std::vector<int>* current,
                  std::vector<std::vector<int>>* out) {
  if (pos + 1 == vars.size()) {
    (*current)[vars[pos]] = remaining;
    out->push_back(*current);
    (*current)[vars[pos]] = 0;
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    (*current)[vars[pos]] = e;
    Compositions(vars, pos + 1, remaining - e, current, out);
  }
  (*current)[vars[pos]] = 0;
}

}  // namespace

MonomialBasis::MonomialBasis(int num_vars, int degree, std::vector<bool> active,
                             Eigen::VectorXd center, Eigen::VectorXd scale)
    : num_vars_(num_vars), degree_(degree) {
  if (num_vars < 0 || degree < 0) {
    throw std::invalid_argument("MonomialBasis: negative size or degree");
  }
  active_ = active.empty() ? std::vector<bool>(num_vars, true) : active;
  if (static_cast<int>(active_.size()) != num_vars) {
    throw std::invalid_argument("MonomialBasis: active mask size mismatch");
  }
  center_ = center.size() == 0 ? Eigen::VectorXd::Zero(num_vars) : center;
  scale_ = scale.size() == 0 ? Eigen::VectorXd::Ones(num_vars) : scale;
  if (center_.size() != num_vars || scale_.size() != num_vars) {
    throw std::invalid_argument("MonomialBasis: normalization size mismatch");
  }
  for (int v = 0; v < num_vars; ++v) {
    if (!(scale_[v] > 0.0)) {
      throw std::invalid_argument("MonomialBasis: scale must be positive");
    }
    if (active_[v]) active_vars_.push_back(v);
  }
  std::vector<std::vector<int>> all;
  std::vector<int> current(num_vars, 0);
  all.push_back(current);
  if (!active_vars_.empty()) {
    for (int d = 1; d <= degree; ++d) {
      Compositions(active_vars_, 0, d, &current, &all);
    }
  }
  size_ = static_cast<int>(all.size());
  exponents_.reserve(all.size() * num_vars);
  for (const auto& e : all) {
    for (int v : e) exponents_.push_back(static_cast<std::uint8_t>(v));
  }
  BuildIndex();
}

MonomialBasis MonomialBasis::FromExponents(
    int num_vars, int degree, const std::vector<std::vector<int>>& exponents,
    Eigen::VectorXd center, Eigen::VectorXd scale) {
  MonomialBasis b;
  b.num_vars_ = num_vars;
  b.degree_ = degree;
  b.size_ = static_cast<int>(exponents.size());
  b.active_.assign(num_vars, false);
  b.center_ = std::move(center);
  b.scale_ = std::move(scale);
  if (b.center_.size() != num_vars || b.scale_.size() != num_vars) {
    throw std::invalid_argument("MonomialBasis: normalization size mismatch");
  }
  for (const auto& e : exponents) {
    if (static_cast<int>(e.size()) != num_vars) {
      throw std::invalid_argument("MonomialBasis: exponent length mismatch");
    }
    int total = 0;
    for (int v = 0; v < num_vars; ++v) {
      if (e[v] < 0) throw std::invalid_argument("negative exponent");
      if (e[v] > 0) b.active_[v] = true;
      total += e[v];
      b.exponents_.push_back(static_cast<std::uint8_t>(e[v]));
    }
    if (total > degree) {
      throw std::invalid_argument("MonomialBasis: exponent exceeds degree");
    }
  }
  for (int v = 0; v < num_vars; ++v) {
    if (b.active_[v]) b.active_vars_.push_back(v);
  }
  b.BuildIndex();
  if (static_cast<int>(b.index_.size()) != b.size_) {
    throw std::invalid_argument("MonomialBasis: duplicate exponent vectors");
  }
  return b;
}

void MonomialBasis::BuildIndex() {
  index_.clear();
  for (int k = 0; k < size_; ++k) {
    std::uint64_t key = 0;
    for (int v = 0; v < num_vars_; ++v) {
      key = key * (degree_ + 1) + exponents_[k * num_vars_ + v];
    }
    index_.emplace(key, k);
  }
}

int MonomialBasis::IndexOf(std::span<const int> exponents) const {
  if (static_cast<int>(exponents.size()) != num_vars_) return -1;
  std::uint64_t key = 0;
  for (int v = 0; v < num_vars_; ++v) {
    if (exponents[v] < 0 || exponents[v] > degree_) return -1;
    key = key * (degree_ + 1) + exponents[v];
  }
  const auto it = index_.find(key);
  return it == index_.end() ? -1 : it->second;
}

void MonomialBasis::PowerTable(const Eigen::Ref<const Eigen::VectorXd>& z,
                               std::vector<double>* table) const {
  if (z.size() != num_vars_) {
    throw std::invalid_argument(
        "MonomialBasis: point has " + std::to_string(z.size()) +
        " variables, expected " + std::to_string(num_vars_));
  }
  const int stride = degree_ + 1;
  table->assign(static_cast<std::size_t>(num_vars_) * stride, 1.0);
  for (int v : active_vars_) {
    const double t = (z[v] - center_[v]) / scale_[v];
    for (int e = 1; e <= degree_; ++e) {
      (*table)[v * stride + e] = (*table)[v * stride + e - 1] * t;
    }
  }
}

void MonomialBasis::Evaluate(const Eigen::Ref<const Eigen::VectorXd>& z,
                             std::span<double> out) const {
  std::vector<double> pw;
  PowerTable(z, &pw);
  const int stride = degree_ + 1;
  for (int k = 0; k < size_; ++k) {
    double m = 1.0;
    const std::uint8_t* e = &exponents_[k * num_vars_];
    for (int v : active_vars_) m *= pw[v * stride + e[v]];
    out[k] = m;
  }
}

void MonomialBasis::EvaluatePartial(const Eigen::Ref<const Eigen::VectorXd>& z,
                                    int var, std::span<double> out) const {
  std::vector<double> pw;
  PowerTable(z, &pw);
  const int stride = degree_ + 1;
  for (int k = 0; k < size_; ++k) {
    const std::uint8_t* e = &exponents_[k * num_vars_];
    if (e[var] == 0) {
      out[k] = 0.0;
      continue;
    }
    double m = e[var] * pw[var * stride + e[var] - 1] / scale_[var];
    for (int v : active_vars_) {
      if (v != var) m *= pw[v * stride + e[v]];
    }
    out[k] = m;
  }
}

void MonomialBasis::EvaluateWithPartials(
    const Eigen::Ref<const Eigen::VectorXd>& z, std::span<const int> vars,
    std::span<double> out_values, std::span<double> out_partials) const {
  std::vector<double> pw;
  PowerTable(z, &pw);
  const int stride = degree_ + 1;
  for (int k = 0; k < size_; ++k) {
    const std::uint8_t* e = &exponents_[k * num_vars_];
    double m = 1.0;
    for (int v : active_vars_) m *= pw[v * stride + e[v]];
    out_values[k] = m;
    for (int var : vars) {
      double d = 0.0;
      if (e[var] > 0) {
        d = e[var] * pw[var * stride + e[var] - 1] / scale_[var];
        for (int v : active_vars_) {
          if (v != var) d *= pw[v * stride + e[v]];
        }
      }
      out_partials[static_cast<std::size_t>(var) * size_ + k] = d;
    }
  }
}

nlohmann::json MonomialBasis::ToJson() const {
  nlohmann::json j;
  j["num_vars"] = num_vars_;
  j["degree"] = degree_;
  std::vector<std::vector<int>> ex(size_, std::vector<int>(num_vars_));
  for (int k = 0; k < size_; ++k) {
    for (int v = 0; v < num_vars_; ++v) ex[k][v] = exponent(k, v);
  }
  j["exponents"] = ex;
  j["center"] = std::vector<double>(center_.data(),
                                    center_.data() + center_.size());
  j["scale"] =
      std::vector<double>(scale_.data(), scale_.data() + scale_.size());
  return j;
}

MonomialBasis MonomialBasis::FromJson(const nlohmann::json& j) {
  const auto c = j.at("center").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  return FromExponents(
      j.at("num_vars").get<int>(), j.at("degree").get<int>(),
      j.at("exponents").get<std::vector<std::vector<int>>>(),
      Eigen::Map<const Eigen::VectorXd>(c.data(), c.size()),
      Eigen::Map<const Eigen::VectorXd>(s.data(), s.size()));
}

PolyMatrixFamily::PolyMatrixFamily(int rows, int cols, bool symmetric,
                                   std::shared_ptr<const MonomialBasis> basis)
    : rows_(rows), cols_(cols), symmetric_(symmetric), basis_(std::move(basis)) {
  if (symmetric && rows != cols) {
    throw std::invalid_argument("symmetric family must be square");
  }
  coeffs_.assign(static_cast<std::size_t>(rows) * cols * basis_->size(), 0.0);
}

PolyMatrixFamily PolyMatrixFamily::ConstantFamily(
    const Eigen::MatrixXd& value, bool symmetric,
    std::shared_ptr<const MonomialBasis> basis) {
  PolyMatrixFamily f(static_cast<int>(value.rows()),
                     static_cast<int>(value.cols()), symmetric,
                     std::move(basis));
  std::vector<int> zero(f.basis().num_vars(), 0);
  const int k0 = f.basis().IndexOf(zero);
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = symmetric ? i : 0; j < f.cols(); ++j) {
      f.set_coeff(i, j, k0, value(i, j));
    }
  }
  return f;
}

void PolyMatrixFamily::set_coeff(int i, int j, int k, double value) {
  const int K = basis_->size();
  coeffs_[(i * cols_ + j) * K + k] = value;
  if (symmetric_) coeffs_[(j * cols_ + i) * K + k] = value;
}

int PolyMatrixFamily::num_free_entries() const {
  return symmetric_ ? rows_ * (rows_ + 1) / 2 : rows_ * cols_;
}

std::pair<int, int> PolyMatrixFamily::free_entry(int e) const {
  if (!symmetric_) return {e / cols_, e % cols_};
  for (int i = 0; i < rows_; ++i) {
    const int row_len = rows_ - i;
    if (e < row_len) return {i, i + e};
    e -= row_len;
  }
  throw std::out_of_range("free_entry index");
}

Eigen::VectorXd PolyMatrixFamily::Joint(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (x.size() + theta.size() != basis_->num_vars()) {
    throw std::invalid_argument(
        "PolyMatrixFamily: point dimension " +
        std::to_string(x.size() + theta.size()) + " does not match basis (" +
        std::to_string(basis_->num_vars()) + ")");
  }
  Eigen::VectorXd z(x.size() + theta.size());
  z << x, theta;
  return z;
}

Eigen::MatrixXd PolyMatrixFamily::Contract(
    std::span<const double> monomials) const {
  const int K = basis_->size();
  Eigen::MatrixXd out(rows_, cols_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = symmetric_ ? i : 0; j < cols_; ++j) {
      const double* c = coeffs_.data() + (i * cols_ + j) * K;
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += c[k] * monomials[k];
      out(i, j) = s;
      if (symmetric_) out(j, i) = s;
    }
  }
  return out;
}

Eigen::MatrixXd PolyMatrixFamily::Evaluate(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const Eigen::VectorXd z = Joint(x, theta);
  std::vector<double> m(basis_->size());
  basis_->Evaluate(z, m);
  return Contract(m);
}

PolyMatrixFamily PolyMatrixFamily::Partial(int var) const {
  if (var < 0 || var >= basis_->num_vars()) {
    throw std::out_of_range("Partial: variable index out of range");
  }
  PolyMatrixFamily d(rows_, cols_, symmetric_, basis_);
  const int K = basis_->size();
  const int nv = basis_->num_vars();
  std::vector<int> e(nv);
  for (int k = 0; k < K; ++k) {
    const int ev = basis_->exponent(k, var);
    if (ev == 0) continue;
    for (int v = 0; v < nv; ++v) e[v] = basis_->exponent(k, v);
    e[var] -= 1;
    const int target = basis_->IndexOf(e);
    const double factor = ev / basis_->scale()[var];
    for (std::size_t idx = 0; idx < static_cast<std::size_t>(rows_ * cols_);
         ++idx) {
      d.coeffs_[idx * K + target] += factor * coeffs_[idx * K + k];
    }
  }
  return d;
}

Eigen::MatrixXd PolyMatrixFamily::DirectionalDerivative(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta,
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != x.size()) {
    throw std::invalid_argument("DirectionalDerivative: direction size");
  }
  const Eigen::VectorXd z = Joint(x, theta);
  const int K = basis_->size();
  std::vector<double> m(K), dm(K, 0.0), tmp(K);
  for (int i = 0; i < x.size(); ++i) {
    if (v[i] == 0.0) continue;
    basis_->EvaluatePartial(z, i, tmp);
    for (int k = 0; k < K; ++k) dm[k] += v[i] * tmp[k];
  }
  return Contract(dm);
}

PolyMatrixFamily PolyMatrixFamily::operator*(double s) const {
  PolyMatrixFamily out = *this;
  for (double& c : out.coeffs_) c *= s;
  return out;
}

PolyMatrixFamily PolyMatrixFamily::operator+(
    const PolyMatrixFamily& other) const {
  if (other.basis_ != basis_ || other.rows_ != rows_ || other.cols_ != cols_) {
    throw std::invalid_argument("PolyMatrixFamily: incompatible sum");
  }
  PolyMatrixFamily out = *this;
  out.symmetric_ = symmetric_ && other.symmetric_;
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    out.coeffs_[i] += other.coeffs_[i];
  }
  return out;
}

nlohmann::json PolyMatrixFamily::ToJson() const {
  nlohmann::json j;
  j["rows"] = rows_;
  j["cols"] = cols_;
  j["symmetric"] = symmetric_;
  const int K = basis_->size();
  std::vector<std::vector<std::vector<double>>> t(
      rows_, std::vector<std::vector<double>>(cols_));
  for (int i = 0; i < rows_; ++i) {
    for (int jj = 0; jj < cols_; ++jj) {
      const double* c = coeffs_.data() + (i * cols_ + jj) * K;
      t[i][jj].assign(c, c + K);
    }
  }
  j["coefficients"] = t;
  return j;
}

PolyMatrixFamily PolyMatrixFamily::FromJson(
    const nlohmann::json& j, std::shared_ptr<const MonomialBasis> basis) {
  PolyMatrixFamily f(j.at("rows").get<int>(), j.at("cols").get<int>(),
                     j.at("symmetric").get<bool>(), std::move(basis));
  const auto t =
      j.at("coefficients").get<std::vector<std::vector<std::vector<double>>>>();
  const int K = f.basis_->size();
  if (static_cast<int>(t.size()) != f.rows_) {
    throw std::invalid_argument("coefficient tensor row count mismatch");
  }
  for (int i = 0; i < f.rows_; ++i) {
    if (static_cast<int>(t[i].size()) != f.cols_) {
      throw std::invalid_argument("coefficient tensor column count mismatch");
    }
    for (int jj = 0; jj < f.cols_; ++jj) {
      if (static_cast<int>(t[i][jj].size()) != K) {
        throw std::invalid_argument("coefficient tensor basis-size mismatch");
      }
      for (int k = 0; k < K; ++k) {
        f.coeffs_[(i * f.cols_ + jj) * K + k] = t[i][jj][k];
      }
    }
  }
  if (f.symmetric_) {
    for (int i = 0; i < f.rows_; ++i) {
      for (int jj = 0; jj < i; ++jj) {
        for (int k = 0; k < K; ++k) {
          if (f.coeff(i, jj, k) != f.coeff(jj, i, k)) {
            throw std::invalid_argument(
                "symmetric family with asymmetric coefficients");
          }
        }
      }
    }
  }
  return f;
}

}  // namespace arccm
