#ifndef MCLD_RATE_HPP_
#define MCLD_RATE_HPP_

#include <complex>
#include <vector>

#include "mcld/spectral.hpp"

namespace mcld {

// Lambda(aF) = log Perron root of the scaled kernel e^{aF} P; the limiting
// scaled log-moment-generating function of the partial sums of F.
// Evaluated with a max-shift so that large |a| cannot overflow.
double lambda_of(const TransitionKernel& P, const Functional& F, double a);

// First and second derivatives of a -> Lambda(aF): d1 = pi_a(F) via the
// twisted invariant measure, d2 = asymptotic variance of F under the twisted
// chain.  Both are cross-validated against central finite differences of
// Lambda (step 1e-5, evaluated in extended precision) to 1e-6 relative;
// disagreement raises an internal-consistency error.
struct LambdaDerivatives {
  double d1 = 0.0;
  double d2 = 0.0;
};

LambdaDerivatives lambda_derivatives(const TransitionKernel& P,
                                     const Functional& F, double a);

// Sampled curve a -> (Lambda(aF), Lambda'(a), Lambda''(a)) with the twisted
// invariant measures.
struct LambdaCurve {
  Functional F;
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> d1;
  std::vector<double> d2;
  std::vector<Measure> twisted_measures;
};

LambdaCurve lambda_curve(const TransitionKernel& P, const Functional& F,
                         const std::vector<double>& grid);

// F_max = lim_{a->inf} Lambda'(a), computed as the maximum mean weight of F
// over directed cycles of the transition graph (Karp).
double f_max(const TransitionKernel& P, const Functional& F);

// Upper-tail rate point: a solves Lambda'(a) = c, J = a c - Lambda(aF).
struct RatePoint {
  double c = 0.0;
  double a = 0.0;
  double J = 0.0;
  double sigma2 = 0.0;
  Functional check_f_at;
};

RatePoint solve_rate_point(const TransitionKernel& P, const Functional& F,
                           double c);

// Legendre dual over measures, Lambda*(nu) = sup_F [<nu,F> - Lambda(F)],
// by gradient ascent in F-space with exact gradient nu - pi_F.  Returns
// +infinity when no kernel absolutely continuous w.r.t. P keeps nu
// invariant.
double legendre_dual_measure(const TransitionKernel& P, const Measure& nu);

// Relative entropy rate of a pair measure: H(Gamma || pi1 (x) P) with pi1
// the first marginal; +infinity when the marginals disagree beyond 1e-10 or
// Gamma charges a null transition.
double entropy_rate_pair(const TransitionKernel& P, const PairMeasure& Gamma);

// Donsker-Varadhan form I(nu) = inf over kernels Pk with nu Pk = nu of
// H(nu (x) Pk || nu (x) P), solved by Lagrangian dual ascent with Gibbs
// rows.  Agrees with legendre_dual_measure when both are finite.
double entropy_rate_measure(const TransitionKernel& P, const Measure& nu);

struct KernelEntropySolution {
  double value = 0.0;
  bool feasible = false;
  TransitionKernel minimizer;
};

KernelEntropySolution solve_entropy_rate_measure(const TransitionKernel& P,
                                                 const Measure& nu);

// Is there a transition kernel, absolutely continuous w.r.t. P, keeping nu
// invariant?  Exact max-flow feasibility test.
bool measure_invariantizable(const TransitionKernel& P, const Measure& nu);

// The dual pair (Gamma, M) at tilt a: Gamma = pi_a (x) Pk_a and
// M(x,y) = a F(x); verifies <Gamma,M> = Lambda(M) + Lambda*(Gamma) and the
// similarity of M0 = log dGamma/d(pi_a (x) P) to M - Lambda(M).
struct DualPairRecord {
  PairMeasure Gamma;
  Matrix M;
  double lambda_val = 0.0;
  double entropy = 0.0;
  double duality_residual = 0.0;
  double similarity_residual = 0.0;
};

DualPairRecord dual_pair_check(const TransitionKernel& P, const Functional& F,
                               double a);

enum class LatticeKind { lattice, nonlattice };

// Lattice structure of the values of F: minimal span h with all values in
// d + h Z.  A constant F is reported as lattice with span 0.
struct LatticeInfo {
  LatticeKind kind = LatticeKind::nonlattice;
  double span = 0.0;
  double offset = 0.0;
};

LatticeInfo lattice_span(const Functional& F, double tol = 1e-9);

// Asymptotic variance of F minus its best lattice projection, when a coarse
// candidate span exists; small values flag an almost-lattice functional.
std::optional<double> almost_lattice_residual_variance(
    const TransitionKernel& P, const Functional& F, double tol = 1e-9);

// Moment generating function m_n(alpha) = E_x[exp(alpha S_n)] as the exact
// matrix power (P_f^n 1)(x), accumulated in log scale.  log_mgf returns
// log|m_n| + i arg(m_n).
std::complex<double> mgf(const TransitionKernel& P, const Functional& F,
                         std::complex<double> alpha, int x, int n);
std::complex<double> log_mgf(const TransitionKernel& P, const Functional& F,
                             std::complex<double> alpha, int x, int n);

// For each omega in the grid, the sequence |m_k(a + i omega)| e^{-k
// Lambda(aF)} for k = 1..n.
std::vector<std::vector<double>> mgf_decay_scan(
    const TransitionKernel& P, const Functional& F, double a,
    const std::vector<double>& omega_grid, int x, int n);

enum class TailMethod { nonlattice_BR, lattice_BR, exact_dp };

std::string to_string(TailMethod method);

// predicted = prefactor * exp(-n * exponent).
struct TailAsymptotic {
  int n = 0;
  double c = 0.0;
  double predicted = 0.0;
  TailMethod method = TailMethod::nonlattice_BR;
  double prefactor = 0.0;
  double exponent = 0.0;
};

// Non-lattice Bahadur-Ranga Rao: prefactor chk_f_a(x) / (a sqrt(2 pi n
// sigma_a^2)), exponent J(c).
TailAsymptotic bahadur_rao_nonlattice(const TransitionKernel& P,
                                      const Functional& F, int x, double c,
                                      int n);

// Lattice Bahadur-Ranga Rao at finite n, with the per-n log-mgf
// Lambda_n(a) = (1/n) log E_x[e^{a S_n}]: a_n solves Lambda_n'(a) = c_n,
// prefactor h / ((1 - e^{-h a_n}) sqrt(2 pi n Lambda_n''(a_n))), exponent
// J_n = a_n c_n - Lambda_n(a_n).  The target level nc is rounded up to the
// nearest achievable support point of S_n.
TailAsymptotic bahadur_rao_lattice(const TransitionKernel& P,
                                   const Functional& F, int x, double c,
                                   int n);

// Exact P_x{S_n >= nc} for a lattice F by dynamic programming over
// (state, lattice sum); errors out beyond 1e6 table cells.
double exact_tail_dp(const TransitionKernel& P, const Functional& F, int x,
                     double c, int n);

}  // namespace mcld

#endif  // MCLD_RATE_HPP_
