#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sosctl::poly {

/// A primitive monomial prod_j x_j^{a_j}, stored as its exponent vector.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<int> exponents);

  /// The constant monomial 1 in `dim` variables.
  static Monomial constant(int dim);
  /// The monomial x_var.
  static Monomial variable(int dim, int var);

  int dim() const { return static_cast<int>(exponents_.size()); }
  int degree() const;
  bool is_constant() const { return degree() == 0; }
  const std::vector<int>& exponents() const { return exponents_; }
  int operator[](int j) const { return exponents_[j]; }

  double eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Monomial operator*(const Monomial& other) const;

  // Graded lexicographic: lower total degree first; within a degree the
  // monomial with the larger leading exponent comes first (x1^2, x1 x2, x2^2).
  std::strong_ordering operator<=>(const Monomial& other) const;
  bool operator==(const Monomial& other) const = default;

  std::string to_string() const;

 private:
  std::vector<int> exponents_;
};

/// Ordered list of monomials: the vector-valued function x -> [m_1(x), ...].
class MonomialBasis {
 public:
  MonomialBasis() = default;
  explicit MonomialBasis(std::vector<Monomial> entries, std::string name = {});

  /// Builds a basis from exponent tuples, e.g. {{1,0},{0,1}}.
  static MonomialBasis from_exponents(const std::vector<std::vector<int>>& exps,
                                      std::string name = {});

  int size() const { return static_cast<int>(entries_.size()); }
  int dim() const;
  const Monomial& operator[](int i) const { return entries_[i]; }
  const std::vector<Monomial>& entries() const { return entries_; }
  const std::string& name() const { return name_; }

  Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Entry (i, j) is d basis_i / d x_j.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  std::optional<int> index_of(const Monomial& m) const;
  bool contains_constant() const;
  /// Every variable has a pure power in the basis and no entry is constant,
  /// so the basis vanishes exactly at the origin.
  bool is_strict() const;
  bool is_non_redundant() const;
  int max_degree() const;

  std::vector<std::vector<int>> exponent_lists() const;

 private:
  std::vector<Monomial> entries_;
  std::string name_;
};

/// All monomials in `dim` variables with min_degree <= degree <= max_degree,
/// graded-lex ordered.
MonomialBasis graded_basis(int dim, int min_degree, int max_degree,
                           std::string name = {});

/// Entry i*|b2|+j of the result is b1_i * b2_j.
MonomialBasis kron_basis(const MonomialBasis& b1, const MonomialBasis& b2);

struct NonRedundantForm {
  MonomialBasis basis;
  /// reduced.size() x raw.size() 0/1 matrix with one 1 per column;
  /// raw(x) = selection^T * reduced(x).
  Eigen::MatrixXd selection;
  /// index[i] = position in `basis` of raw entry i.
  std::vector<int> index;
};

/// Removes duplicate entries keeping the first occurrence.
NonRedundantForm non_redundant_form(const MonomialBasis& raw,
                                    std::string name = {});

/// Sparse multivariate polynomial with real coefficients.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double>;

  Polynomial() = default;
  explicit Polynomial(int dim) : dim_(dim) {}
  Polynomial(int dim, double constant);
  Polynomial(const Monomial& m, double coefficient = 1.0);

  static Polynomial from_terms(int dim, const std::vector<std::pair<std::vector<int>, double>>& terms);
  static Polynomial from_coefficients(const MonomialBasis& basis,
                                      const Eigen::Ref<const Eigen::VectorXd>& coeffs);

  int dim() const { return dim_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;
  double coefficient(const Monomial& m) const;

  double eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Polynomial derivative(int var) const;

  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial& operator*=(double s);
  void add_term(const Monomial& m, double c);

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  Polynomial operator-() const { return *this * -1.0; }

  /// Largest absolute coefficient; 0 for the zero polynomial.
  double max_abs_coefficient() const;
  std::string to_string() const;

 private:
  int dim_ = 0;
  TermMap terms_;
};

/// Coefficients of p over a non-redundant basis. Throws
/// UnrepresentableMonomial if p has a term outside the basis.
Eigen::VectorXd extract_coefficients(const Polynomial& p, const MonomialBasis& basis);

/// Dense matrix of polynomials.
class PolyMatrix {
 public:
  PolyMatrix() = default;
  PolyMatrix(int rows, int cols, int dim);

  static PolyMatrix constant(const Eigen::Ref<const Eigen::MatrixXd>& m, int dim);
  static PolyMatrix from_basis_column(const MonomialBasis& b);
  static PolyMatrix from_basis_row(const MonomialBasis& b);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int dim() const { return dim_; }
  Polynomial& operator()(int i, int j) { return entries_[j * rows_ + i]; }
  const Polynomial& operator()(int i, int j) const { return entries_[j * rows_ + i]; }

  Eigen::MatrixXd eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  PolyMatrix transpose() const;
  /// Jacobian of a column vector of polynomials: (rows x dim).
  PolyMatrix jacobian() const;
  int max_degree() const;

  friend PolyMatrix operator*(const PolyMatrix& a, const PolyMatrix& b);
  friend PolyMatrix operator*(const Eigen::Ref<const Eigen::MatrixXd>& a, const PolyMatrix& b);
  friend PolyMatrix operator*(const PolyMatrix& a, const Eigen::Ref<const Eigen::MatrixXd>& b);
  friend PolyMatrix operator+(const PolyMatrix& a, const PolyMatrix& b);
  friend PolyMatrix operator-(const PolyMatrix& a, const PolyMatrix& b);

 private:
  int rows_ = 0;
  int cols_ = 0;
  int dim_ = 0;
  std::vector<Polynomial> entries_;
};

/// Evaluation-only form of a polynomial matrix, sum_m x^(a_m) C_m, with the
/// monomials shared across entries. Used in inner simulation loops.
class FlatPolyMatrix {
 public:
  FlatPolyMatrix() = default;
  explicit FlatPolyMatrix(const PolyMatrix& m);
  /// sum_k weights[k] * ms[k]; all matrices must share one shape.
  static FlatPolyMatrix combination(const std::vector<PolyMatrix>& ms,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int num_monomials() const { return static_cast<int>(coeffs_.cols()); }

  void eval_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const;
  Eigen::MatrixXd eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  void build(const std::map<Monomial, Eigen::VectorXd>& acc, int rows, int cols, int dim);

  int rows_ = 0;
  int cols_ = 0;
  int dim_ = 0;
  int maxdeg_ = 0;
  std::vector<int> exps_;   // num_monomials x dim, row-major
  Eigen::MatrixXd coeffs_;  // (rows*cols) x num_monomials
};

// Column-major vectorization helpers.
Eigen::VectorXd vec(const Eigen::Ref<const Eigen::MatrixXd>& m);
/// Half vectorization (lower triangle, column by column). Throws
/// AsymmetricInput if |m - m^T| exceeds 1e-12.
Eigen::VectorXd vech(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd inv_vec(const Eigen::Ref<const Eigen::VectorXd>& v, int rows, int cols);
/// Symmetric matrix from its half vectorization.
Eigen::MatrixXd inv_vech(const Eigen::Ref<const Eigen::VectorXd>& v);
/// Diagonal of the scaling matrix relating vec and vech of a symmetric
/// matrix: x^T T x = vech(x x^T)^T diag(scaling) vech(T). Entries are 1 on
/// the diagonal positions and 2 elsewhere.
Eigen::VectorXd vech_scaling(int n);
/// (row, col) of each vech position.
std::vector<std::pair<int, int>> vech_positions(int n);

}  // namespace sosctl::poly
