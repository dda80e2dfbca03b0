#ifndef MCLD_KERNEL_HPP_
#define MCLD_KERNEL_HPP_

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcld {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Tolerance used when validating row sums and normalized measures.
inline constexpr double kMassTol = 1e-12;

// Thrown when an operation requires an irreducible chain.  The message
// names the communicating classes of the offending kernel.
class ReducibleChainError : public std::runtime_error {
 public:
  explicit ReducibleChainError(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when an operation requires an aperiodic chain.
class PeriodicChainError : public std::runtime_error {
 public:
  explicit PeriodicChainError(const std::string& what)
      : std::runtime_error(what) {}
};

// A finite row-stochastic matrix with state labels.  Rows index the
// current state, columns the next state, in the order of 'states'.
struct TransitionKernel {
  std::vector<std::string> states;
  Matrix rows;

  TransitionKernel() = default;

  // Validates nonnegativity and row sums (within kMassTol of one).
  // With renormalize = true, rows are rescaled to sum exactly to one;
  // grid-truncated models use this to fold lost mass back in.
  explicit TransitionKernel(Matrix p, std::vector<std::string> labels = {},
                            bool renormalize = false);

  Eigen::Index size() const { return rows.rows(); }

  // P^t by binary exponentiation, t >= 0.
  Matrix power(int t) const;

  // Index of a state label; throws std::invalid_argument if unknown.
  int index_of(const std::string& label) const;
};

// A real function on the state space, stored in state order.
struct Functional {
  Vector values;
  std::string label;

  Functional() = default;
  Functional(Vector v, std::string name = "");

  Eigen::Index size() const { return values.size(); }
  double operator()(int i) const { return values(i); }
};

// A nonnegative measure on the state space.  When 'normalized' is set the
// weights must sum to one within kMassTol.
struct Measure {
  Vector weights;
  bool normalized = true;

  Measure() = default;
  explicit Measure(Vector w, bool is_normalized = true);

  // Integral of a functional against this measure.
  double operator()(const Functional& f) const {
    return weights.dot(f.values);
  }
  double operator()(const Vector& v) const { return weights.dot(v); }
  Eigen::Index size() const { return weights.size(); }
};

// A nonnegative measure on pairs of states (a bivariate measure).
struct PairMeasure {
  Matrix weights;

  PairMeasure() = default;
  explicit PairMeasure(Matrix w, bool require_normalized = true);

  Vector first_marginal() const { return weights.rowwise().sum(); }
  Vector second_marginal() const { return weights.colwise().sum(); }
};

// Communicating-class structure of a kernel.
struct StructureReport {
  bool irreducible = false;
  int period = 1;
  bool aperiodic = true;
  // Partition of {0..n-1} into communicating classes.
  std::vector<std::vector<int>> classes;
};

// Certificate that a set C is small: P^t(x,.) >= epsilon * nu for x in C.
struct SmallSetCertificate {
  int t = 0;
  double epsilon = 0.0;
  Measure nu;
};

// Directed-graph reachability on positive entries: communicating classes,
// period (gcd of cycle lengths per class), and the irreducible/aperiodic
// flags.
StructureReport structure_check(const TransitionKernel& P);

// Unique invariant probability measure of an irreducible kernel, by a
// direct linear solve of pi P = pi, pi(X) = 1.
Measure stationary(const TransitionKernel& P);

// The fundamental matrix Z = (I - P + 1 (x) pi)^{-1}.
Matrix fundamental_matrix(const TransitionKernel& P, const Measure& pi);

// Solves (P - I) Fhat = -F + pi(F) by a direct solve with the fundamental
// matrix; the solution is normalized so that pi(Fhat) = 0.  Requires an
// irreducible aperiodic chain.
Functional solve_poisson(const TransitionKernel& P, const Functional& F);

// Asymptotic variance of the partial sums of F: pi(Q(ZF)) where
// Q(g) = P(g^2) - (Pg)^2.  Always >= 0; zero iff F is a coboundary plus
// a constant.
double asymptotic_variance(const TransitionKernel& P, const Functional& F);

// Weighted sup norm: max_x |g(x)| / v(x).  v must be strictly positive.
double weighted_norm(const Functional& g, const Functional& v);

// Induced operator norm on the v-weighted sup-norm space, exact on finite
// spaces: max_x (|K| v)(x) / v(x).
double operator_norm(const Matrix& K, const Functional& v);

// Perron root of a nonnegative matrix.  Computed by dense eigendecomposition
// and cross-checked against the v-norm power route (repeated squaring of the
// normalized matrix); the two must agree to 1e-8 relative.
double spectral_radius(const Matrix& K, const Functional& v);
double spectral_radius(const Matrix& K);

// Perron root by eigendecomposition only (no cross-check); used in inner
// loops such as taboo-radius bisection.
double perron_root(const Matrix& K);

// The v-norm power route alone: lim ||K^n||_v^{1/n} by repeated squaring
// with per-step normalization.
double norm_power_radius(const Matrix& K, const Functional& v);

// Smallest t <= t_max such that nu(y) = min_{x in C} P^t(x,y) has positive
// mass; returns the normalized nu and epsilon = total mass.  std::nullopt
// when no t <= t_max works.
std::optional<SmallSetCertificate> small_set_certificate(
    const TransitionKernel& P, const std::vector<int>& C, int t_max);

}  // namespace mcld

#endif  // MCLD_KERNEL_HPP_
