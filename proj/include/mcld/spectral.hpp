#ifndef MCLD_SPECTRAL_HPP_
#define MCLD_SPECTRAL_HPP_

#include <complex>
#include <vector>

#include "mcld/kernel.hpp"

namespace mcld {

using Complex = std::complex<double>;
using MatrixC = Eigen::MatrixXcd;
using VectorC = Eigen::VectorXcd;

// Thrown when the two largest eigenvalue moduli of a scaled kernel are too
// close to identify a principal eigenvalue (complex tilts only).
class SpectralGapError : public std::runtime_error {
 public:
  explicit SpectralGapError(const std::string& what)
      : std::runtime_error(what) {}
};

// The scaled kernel P_f(x,y) = exp(alpha F(x)) P(x,y).
struct ScaledKernel {
  TransitionKernel base;
  Functional F;
  Complex alpha{0.0, 0.0};
  MatrixC entries;

  bool is_real() const { return alpha.imag() == 0.0; }
  // Real entry matrix; only valid for real alpha.
  Matrix real_entries() const;
};

ScaledKernel scale_kernel(const TransitionKernel& P, const Functional& F,
                          Complex alpha);

// Principal eigen-data of a scaled kernel: P_f chk_f = lambda chk_f and
// chk_mu P_f = lambda chk_mu, normalized so chk_mu(X) = chk_mu(chk_f) = 1.
// For real alpha, lambda is the (real, positive) Perron root and chk_f,
// chk_mu are strictly positive.
struct EigenTriple {
  Complex lambda{0.0, 0.0};
  VectorC check_f;
  VectorC check_mu;
  double right_residual = 0.0;
  double left_residual = 0.0;

  // Real accessors; throw std::logic_error when the triple is complex.
  Functional eigenfunction() const;
  Measure eigen_measure() const;
  // Twisted invariant measure pi_a = chk_mu .* chk_f (real alpha).
  Measure twisted_invariant() const;
};

EigenTriple principal_eigen(const ScaledKernel& K);

// Nonlinear generator H(G)(x) = log sum_y P(x,y) e^{G(y)} - G(x), evaluated
// with log-sum-exp stabilization.
Functional nonlinear_generator(const TransitionKernel& P, const Functional& G);

// Solution of H(chk_F) = -F + Lambda(F).
struct MultPoisson {
  double Lambda = 0.0;
  Functional check_F;
  EigenTriple triple;
  double residual = 0.0;
};

MultPoisson mult_poisson_solve(const TransitionKernel& P, const Functional& F);

// Doob h-transform of P: rows P(x,y) h(y) / (Ph)(x).
struct TwistedChain {
  TransitionKernel kernel;
  Functional h;
  Measure pi_twisted;
};

TwistedChain twisted_kernel(const TransitionKernel& P, const Functional& h);

// Eigenfunction of K from its resolvent: with R = (lambda_shift I - K)^{-1},
// gamma = (lambda_shift - xi)^{-1} and a small pair (s, nu), the function
// h = (gamma I - (R - s (x) nu))^{-1} s satisfies K h = xi h.
Functional resolvent_eigenfunction(const ScaledKernel& K, double lambda_shift,
                                   const Functional& s, const Measure& nu);

// One point of the multiplicative mean ergodic curve:
// value = E_x[exp(n(alpha <L_n,F> - Lambda))] computed as
// e^{-n Lambda} (P_f^n 1)(x), and deviation = |value - chk_f(x)|.
struct MmetPoint {
  int n = 0;
  Complex value{0.0, 0.0};
  double deviation = 0.0;
};

std::vector<MmetPoint> mmet_exact_curve(const TransitionKernel& P,
                                        const Functional& F, Complex alpha,
                                        int x, int N);

// |lambda_2| / |lambda_1| of a matrix (0 when there is only one eigenvalue).
double subdominant_ratio(const MatrixC& K);
double subdominant_ratio(const Matrix& K);

// Least-squares slope of log(deviation) against n over points with
// deviation above the floor.
double fit_log_slope(const std::vector<MmetPoint>& curve, double floor = 1e-12);

// Taboo solve: U(x) = E_x[exp(eta sum_{t < tau_A} W(Phi(t)))], finite iff
// the spectral radius of diag(e^{eta W}) P restricted to A^c is < 1.
struct TabooSolve {
  double eta = 0.0;
  std::vector<int> A;
  Functional U;
  bool feasible = false;
  double radius = 0.0;
};

TabooSolve taboo_exp_functional(const TransitionKernel& P, const Functional& W,
                                const std::vector<int>& A, double eta);

// Supremum of eta with taboo radius < 1, by bisection to 1e-9.  Returns
// +infinity when A is the whole space or A^c carries no cycle.
double max_regularity_eta(const TransitionKernel& P, const Functional& W,
                          const std::vector<int>& A);

}  // namespace mcld

#endif  // MCLD_SPECTRAL_HPP_
