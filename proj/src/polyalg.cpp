#include "sosctl/polyalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sosctl/errors.hpp"

namespace sosctl::poly {

namespace {

double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

void check_dim(int expected, Eigen::Index got, const char* what) {
  if (got != expected) {
    std::ostringstream os;
    os << what << ": expected dimension " << expected << ", got " << got;
    throw DimensionMismatch(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------- Monomial

Monomial::Monomial(std::vector<int> exponents) : exponents_(std::move(exponents)) {
  for (int a : exponents_) {
    if (a < 0) throw DimensionMismatch("monomial exponents must be non-negative");
  }
}

Monomial Monomial::constant(int dim) { return Monomial(std::vector<int>(dim, 0)); }

Monomial Monomial::variable(int dim, int var) {
  std::vector<int> e(dim, 0);
  e.at(var) = 1;
  return Monomial(std::move(e));
}

int Monomial::degree() const {
  return std::accumulate(exponents_.begin(), exponents_.end(), 0);
}

double Monomial::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(dim(), x.size(), "Monomial::eval");
  double r = 1.0;
  for (int j = 0; j < dim(); ++j) r *= ipow(x[j], exponents_[j]);
  return r;
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (other.dim() != dim()) throw DimensionMismatch("monomial product of different dimensions");
  std::vector<int> e(exponents_);
  for (int j = 0; j < dim(); ++j) e[j] += other.exponents_[j];
  return Monomial(std::move(e));
}

std::strong_ordering Monomial::operator<=>(const Monomial& other) const {
  if (auto c = degree() <=> other.degree(); c != 0) return c;
  // Larger leading exponent sorts first.
  for (std::size_t j = 0; j < std::min(exponents_.size(), other.exponents_.size()); ++j) {
    if (exponents_[j] != other.exponents_[j]) {
      return other.exponents_[j] <=> exponents_[j];
    }
  }
  return exponents_.size() <=> other.exponents_.size();
}

std::string Monomial::to_string() const {
  if (is_constant()) return "1";
  std::ostringstream os;
  bool first = true;
  for (int j = 0; j < dim(); ++j) {
    if (exponents_[j] == 0) continue;
    if (!first) os << '*';
    os << 'x' << (j + 1);
    if (exponents_[j] > 1) os << '^' << exponents_[j];
    first = false;
  }
  return os.str();
}

// ----------------------------------------------------------- MonomialBasis

MonomialBasis::MonomialBasis(std::vector<Monomial> entries, std::string name)
    : entries_(std::move(entries)), name_(std::move(name)) {
  for (const auto& m : entries_) {
    if (m.dim() != entries_.front().dim()) {
      throw DimensionMismatch("basis entries have inconsistent dimensions");
    }
  }
}

MonomialBasis MonomialBasis::from_exponents(const std::vector<std::vector<int>>& exps,
                                            std::string name) {
  std::vector<Monomial> e;
  e.reserve(exps.size());
  for (const auto& a : exps) e.emplace_back(a);
  return MonomialBasis(std::move(e), std::move(name));
}

int MonomialBasis::dim() const { return entries_.empty() ? 0 : entries_.front().dim(); }

Eigen::VectorXd MonomialBasis::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(dim(), x.size(), "eval_basis");
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out[i] = entries_[i].eval(x);
  return out;
}

Eigen::MatrixXd MonomialBasis::jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(dim(), x.size(), "basis_jacobian");
  const int n = dim();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(size(), n);
  for (int i = 0; i < size(); ++i) {
    const auto& a = entries_[i].exponents();
    for (int j = 0; j < n; ++j) {
      if (a[j] == 0) continue;
      double v = a[j] * ipow(x[j], a[j] - 1);
      for (int l = 0; l < n; ++l) {
        if (l != j) v *= ipow(x[l], a[l]);
      }
      J(i, j) = v;
    }
  }
  return J;
}

std::optional<int> MonomialBasis::index_of(const Monomial& m) const {
  for (int i = 0; i < size(); ++i) {
    if (entries_[i] == m) return i;
  }
  return std::nullopt;
}

bool MonomialBasis::contains_constant() const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [](const Monomial& m) { return m.is_constant(); });
}

bool MonomialBasis::is_strict() const {
  if (entries_.empty() || contains_constant()) return false;
  for (int j = 0; j < dim(); ++j) {
    bool has_pure = std::any_of(entries_.begin(), entries_.end(), [&](const Monomial& m) {
      return m[j] > 0 && m.degree() == m[j];
    });
    if (!has_pure) return false;
  }
  return true;
}

bool MonomialBasis::is_non_redundant() const {
  for (int i = 0; i < size(); ++i) {
    for (int j = i + 1; j < size(); ++j) {
      if (entries_[i] == entries_[j]) return false;
    }
  }
  return true;
}

int MonomialBasis::max_degree() const {
  int d = 0;
  for (const auto& m : entries_) d = std::max(d, m.degree());
  return d;
}

std::vector<std::vector<int>> MonomialBasis::exponent_lists() const {
  std::vector<std::vector<int>> out;
  out.reserve(entries_.size());
  for (const auto& m : entries_) out.push_back(m.exponents());
  return out;
}

MonomialBasis graded_basis(int dim, int min_degree, int max_degree, std::string name) {
  std::vector<Monomial> out;
  for (int deg = min_degree; deg <= max_degree; ++deg) {
    // Enumerate compositions of deg into dim parts, leading exponent descending.
    std::vector<int> e(dim, 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == dim - 1) {
        e[pos] = left;
        out.emplace_back(e);
        return;
      }
      for (int a = left; a >= 0; --a) {
        e[pos] = a;
        self(self, pos + 1, left - a);
      }
    };
    if (dim > 0) rec(rec, 0, deg);
  }
  return MonomialBasis(std::move(out), std::move(name));
}

MonomialBasis kron_basis(const MonomialBasis& b1, const MonomialBasis& b2) {
  std::vector<Monomial> out;
  out.reserve(static_cast<std::size_t>(b1.size()) * b2.size());
  for (const auto& m1 : b1.entries()) {
    for (const auto& m2 : b2.entries()) out.push_back(m1 * m2);
  }
  return MonomialBasis(std::move(out));
}

NonRedundantForm non_redundant_form(const MonomialBasis& raw, std::string name) {
  std::vector<Monomial> reduced;
  std::vector<int> index(raw.size());
  for (int i = 0; i < raw.size(); ++i) {
    auto it = std::find(reduced.begin(), reduced.end(), raw[i]);
    if (it == reduced.end()) {
      index[i] = static_cast<int>(reduced.size());
      reduced.push_back(raw[i]);
    } else {
      index[i] = static_cast<int>(it - reduced.begin());
    }
  }
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(reduced.size()), raw.size());
  for (int i = 0; i < raw.size(); ++i) S(index[i], i) = 1.0;
  return {MonomialBasis(std::move(reduced), std::move(name)), std::move(S), std::move(index)};
}

// -------------------------------------------------------------- Polynomial

Polynomial::Polynomial(int dim, double constant) : dim_(dim) {
  add_term(Monomial::constant(dim), constant);
}

Polynomial::Polynomial(const Monomial& m, double coefficient) : dim_(m.dim()) {
  add_term(m, coefficient);
}

Polynomial Polynomial::from_terms(int dim,
                                  const std::vector<std::pair<std::vector<int>, double>>& terms) {
  Polynomial p(dim);
  for (const auto& [e, c] : terms) {
    check_dim(dim, static_cast<Eigen::Index>(e.size()), "Polynomial::from_terms");
    p.add_term(Monomial(e), c);
  }
  return p;
}

Polynomial Polynomial::from_coefficients(const MonomialBasis& basis,
                                         const Eigen::Ref<const Eigen::VectorXd>& coeffs) {
  check_dim(basis.size(), coeffs.size(), "Polynomial::from_coefficients");
  Polynomial p(basis.dim());
  for (int i = 0; i < basis.size(); ++i) p.add_term(basis[i], coeffs[i]);
  return p;
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(dim_, x.size(), "Polynomial::eval");
  double s = 0.0;
  for (const auto& [m, c] : terms_) s += c * m.eval(x);
  return s;
}

Polynomial Polynomial::derivative(int var) const {
  Polynomial out(dim_);
  for (const auto& [m, c] : terms_) {
    int a = m[var];
    if (a == 0) continue;
    std::vector<int> e = m.exponents();
    e[var] -= 1;
    out.add_term(Monomial(std::move(e)), c * a);
  }
  return out;
}

void Polynomial::add_term(const Monomial& m, double c) {
  if (dim_ == 0 && terms_.empty()) dim_ = m.dim();
  if (m.dim() != dim_) throw DimensionMismatch("polynomial term of wrong dimension");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  for (const auto& [m, c] : other.terms_) add_term(m, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [m, c] : terms_) c *= s;
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  Polynomial out(std::max(a.dim(), b.dim()));
  for (const auto& [ma, ca] : a.terms_) {
    for (const auto& [mb, cb] : b.terms_) out.add_term(ma * mb, ca * cb);
  }
  return out;
}

double Polynomial::max_abs_coefficient() const {
  double m = 0.0;
  for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, c] : terms_) {
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << '-';
    os << std::abs(c);
    if (!m.is_constant()) os << '*' << m.to_string();
    first = false;
  }
  return os.str();
}

Eigen::VectorXd extract_coefficients(const Polynomial& p, const MonomialBasis& basis) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.size());
  for (const auto& [m, coef] : p.terms()) {
    auto idx = basis.index_of(m);
    if (!idx) {
      throw UnrepresentableMonomial("monomial " + m.to_string() + " is not in basis " +
                                    (basis.name().empty() ? std::string("<unnamed>") : basis.name()));
    }
    c[*idx] += coef;
  }
  return c;
}

// -------------------------------------------------------------- PolyMatrix

PolyMatrix::PolyMatrix(int rows, int cols, int dim)
    : rows_(rows), cols_(cols), dim_(dim),
      entries_(static_cast<std::size_t>(rows) * cols, Polynomial(dim)) {}

PolyMatrix PolyMatrix::constant(const Eigen::Ref<const Eigen::MatrixXd>& m, int dim) {
  PolyMatrix out(static_cast<int>(m.rows()), static_cast<int>(m.cols()), dim);
  for (int j = 0; j < out.cols_; ++j) {
    for (int i = 0; i < out.rows_; ++i) out(i, j) = Polynomial(dim, m(i, j));
  }
  return out;
}

PolyMatrix PolyMatrix::from_basis_column(const MonomialBasis& b) {
  PolyMatrix out(b.size(), 1, b.dim());
  for (int i = 0; i < b.size(); ++i) out(i, 0) = Polynomial(b[i]);
  return out;
}

PolyMatrix PolyMatrix::from_basis_row(const MonomialBasis& b) {
  return from_basis_column(b).transpose();
}

Eigen::MatrixXd PolyMatrix::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::MatrixXd out(rows_, cols_);
  for (int j = 0; j < cols_; ++j) {
    for (int i = 0; i < rows_; ++i) out(i, j) = (*this)(i, j).eval(x);
  }
  return out;
}

PolyMatrix PolyMatrix::transpose() const {
  PolyMatrix out(cols_, rows_, dim_);
  for (int j = 0; j < cols_; ++j) {
    for (int i = 0; i < rows_; ++i) out(j, i) = (*this)(i, j);
  }
  return out;
}

PolyMatrix PolyMatrix::jacobian() const {
  if (cols_ != 1) throw DimensionMismatch("jacobian requires a column vector");
  PolyMatrix out(rows_, dim_, dim_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < dim_; ++j) out(i, j) = (*this)(i, 0).derivative(j);
  }
  return out;
}

int PolyMatrix::max_degree() const {
  int d = 0;
  for (const auto& p : entries_) d = std::max(d, p.degree());
  return d;
}

PolyMatrix operator*(const PolyMatrix& a, const PolyMatrix& b) {
  if (a.cols_ != b.rows_) throw DimensionMismatch("PolyMatrix product shape mismatch");
  PolyMatrix out(a.rows_, b.cols_, std::max(a.dim_, b.dim_));
  for (int i = 0; i < a.rows_; ++i) {
    for (int j = 0; j < b.cols_; ++j) {
      Polynomial s(out.dim_);
      for (int l = 0; l < a.cols_; ++l) s += a(i, l) * b(l, j);
      out(i, j) = std::move(s);
    }
  }
  return out;
}

PolyMatrix operator*(const Eigen::Ref<const Eigen::MatrixXd>& a, const PolyMatrix& b) {
  if (a.cols() != b.rows_) throw DimensionMismatch("PolyMatrix product shape mismatch");
  PolyMatrix out(static_cast<int>(a.rows()), b.cols_, b.dim_);
  for (int i = 0; i < out.rows_; ++i) {
    for (int j = 0; j < b.cols_; ++j) {
      Polynomial s(b.dim_);
      for (int l = 0; l < b.rows_; ++l) {
        if (a(i, l) != 0.0) s += a(i, l) * b(l, j);
      }
      out(i, j) = std::move(s);
    }
  }
  return out;
}

PolyMatrix operator*(const PolyMatrix& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.cols_ != b.rows()) throw DimensionMismatch("PolyMatrix product shape mismatch");
  PolyMatrix out(a.rows_, static_cast<int>(b.cols()), a.dim_);
  for (int i = 0; i < a.rows_; ++i) {
    for (int j = 0; j < out.cols_; ++j) {
      Polynomial s(a.dim_);
      for (int l = 0; l < a.cols_; ++l) {
        if (b(l, j) != 0.0) s += a(i, l) * b(l, j);
      }
      out(i, j) = std::move(s);
    }
  }
  return out;
}

PolyMatrix operator+(const PolyMatrix& a, const PolyMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw DimensionMismatch("PolyMatrix sum shape mismatch");
  PolyMatrix out = a;
  for (std::size_t i = 0; i < out.entries_.size(); ++i) out.entries_[i] += b.entries_[i];
  return out;
}

PolyMatrix operator-(const PolyMatrix& a, const PolyMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw DimensionMismatch("PolyMatrix difference shape mismatch");
  PolyMatrix out = a;
  for (std::size_t i = 0; i < out.entries_.size(); ++i) out.entries_[i] -= b.entries_[i];
  return out;
}

// ----------------------------------------------------------- vectorization

Eigen::VectorXd vec(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::VectorXd v(m.size());
  Eigen::Index q = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[q++] = m(i, j);
  }
  return v;
}

Eigen::VectorXd vech(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("vech requires a square matrix");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw AsymmetricInput("vech requires a symmetric matrix");
  }
  const Eigen::Index n = m.rows();
  Eigen::VectorXd v(n * (n + 1) / 2);
  Eigen::Index q = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) v[q++] = m(i, j);
  }
  return v;
}

Eigen::MatrixXd inv_vec(const Eigen::Ref<const Eigen::VectorXd>& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols) {
    throw DimensionMismatch("inv_vec: length does not match shape");
  }
  Eigen::MatrixXd m(rows, cols);
  Eigen::Index q = 0;
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = v[q++];
  }
  return m;
}

Eigen::MatrixXd inv_vech(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double nd = (std::sqrt(8.0 * static_cast<double>(v.size()) + 1.0) - 1.0) / 2.0;
  const auto n = static_cast<Eigen::Index>(std::llround(nd));
  if (n * (n + 1) / 2 != v.size()) throw DimensionMismatch("inv_vech: length is not triangular");
  Eigen::MatrixXd m(n, n);
  Eigen::Index q = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      m(i, j) = v[q];
      m(j, i) = v[q];
      ++q;
    }
  }
  return m;
}

Eigen::VectorXd vech_scaling(int n) {
  Eigen::VectorXd s(n * (n + 1) / 2);
  int q = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) s[q++] = (i == j) ? 1.0 : 2.0;
  }
  return s;
}

std::vector<std::pair<int, int>> vech_positions(int n) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) out.emplace_back(i, j);
  }
  return out;
}

// ---------------------------------------------------------- FlatPolyMatrix

FlatPolyMatrix::FlatPolyMatrix(const PolyMatrix& m) {
  std::map<Monomial, Eigen::VectorXd> acc;
  const int n = m.rows() * m.cols();
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) {
      for (const auto& [mono, c] : m(i, j).terms()) {
        auto it = acc.try_emplace(mono, Eigen::VectorXd::Zero(n)).first;
        it->second[j * m.rows() + i] += c;
      }
    }
  }
  build(acc, m.rows(), m.cols(), m.dim());
}

FlatPolyMatrix FlatPolyMatrix::combination(const std::vector<PolyMatrix>& ms,
                                           const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (ms.empty() || static_cast<int>(ms.size()) != weights.size()) {
    throw DimensionMismatch("combination needs one weight per matrix");
  }
  const int r = ms.front().rows(), c = ms.front().cols(), d = ms.front().dim();
  std::map<Monomial, Eigen::VectorXd> acc;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const PolyMatrix& m = ms[k];
    if (m.rows() != r || m.cols() != c || m.dim() != d) {
      throw DimensionMismatch("combination of differently shaped matrices");
    }
    if (weights[k] == 0.0) continue;
    for (int j = 0; j < c; ++j) {
      for (int i = 0; i < r; ++i) {
        for (const auto& [mono, v] : m(i, j).terms()) {
          auto it = acc.try_emplace(mono, Eigen::VectorXd::Zero(r * c)).first;
          it->second[j * r + i] += weights[k] * v;
        }
      }
    }
  }
  FlatPolyMatrix out;
  out.build(acc, r, c, d);
  return out;
}

void FlatPolyMatrix::build(const std::map<Monomial, Eigen::VectorXd>& acc, int rows, int cols,
                           int dim) {
  rows_ = rows;
  cols_ = cols;
  dim_ = dim;
  maxdeg_ = 0;
  coeffs_.resize(rows * cols, static_cast<Eigen::Index>(acc.size()));
  exps_.clear();
  int m = 0;
  for (const auto& [mono, col] : acc) {
    for (int j = 0; j < dim; ++j) {
      exps_.push_back(mono[j]);
      maxdeg_ = std::max(maxdeg_, mono[j]);
    }
    coeffs_.col(m++) = col;
  }
}

void FlatPolyMatrix::eval_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                               Eigen::Ref<Eigen::MatrixXd> out) const {
  check_dim(dim_, x.size(), "FlatPolyMatrix::eval");
  if (out.rows() != rows_ || out.cols() != cols_) throw DimensionMismatch("output has wrong shape");
  thread_local std::vector<double> pw, mv;
  const int stride = maxdeg_ + 1;
  pw.resize(static_cast<std::size_t>(dim_) * stride);
  for (int j = 0; j < dim_; ++j) {
    double* p = pw.data() + j * stride;
    p[0] = 1.0;
    for (int e = 1; e < stride; ++e) p[e] = p[e - 1] * x[j];
  }
  const int nm = num_monomials();
  mv.resize(nm);
  for (int m = 0; m < nm; ++m) {
    double v = 1.0;
    const int* a = exps_.data() + static_cast<std::size_t>(m) * dim_;
    for (int j = 0; j < dim_; ++j) v *= pw[j * stride + a[j]];
    mv[m] = v;
  }
  out.setZero();
  for (int m = 0; m < nm; ++m) {
    const double v = mv[m];
    for (int c = 0; c < cols_; ++c) {
      for (int r = 0; r < rows_; ++r) out(r, c) += v * coeffs_(c * rows_ + r, m);
    }
  }
}

Eigen::MatrixXd FlatPolyMatrix::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::MatrixXd out(rows_, cols_);
  eval_into(x, out);
  return out;
}

}  // namespace sosctl::poly
