#ifndef MCLD_DRIFT_HPP_
#define MCLD_DRIFT_HPP_

#include <optional>
#include <utility>

#include "mcld/spectral.hpp"

namespace mcld {

enum class DriftKind { V2, V3, V4, DV2, DV3, DV4 };

std::string to_string(DriftKind kind);
DriftKind drift_kind_from_string(const std::string& name);
bool is_multiplicative(DriftKind kind);

// Certificate for one drift inequality lhs <= -delta * rhs_weight + b 1_C,
// where lhs is (P - I)V for the linear kinds and H(V) for the multiplicative
// ones, and rhs_weight is 1, W or V for kinds 2, 3, 4.
// slack(x) = (-delta rhs_weight(x) + b 1_C(x)) - lhs(x); the certificate
// holds iff min slack >= -1e-10.
struct DriftCertificate {
  DriftKind kind = DriftKind::V3;
  Functional V;
  std::optional<Functional> W;
  std::vector<int> C;
  double delta = 0.0;
  double b = 0.0;
  Functional slack;
  bool holds = false;
  std::optional<SmallSetCertificate> small_set;
};

DriftCertificate check_drift(const TransitionKernel& P, DriftKind kind,
                             const Functional& V,
                             const std::optional<Functional>& W,
                             const std::vector<int>& C, double delta, double b);

// Tightest constants for the inequality: delta = min over x outside C of
// (-lhs / rhs_weight), b = max over C of (lhs + delta rhs_weight).
// Fails (nullopt) when no positive delta exists.
std::optional<std::pair<double, double>> fit_drift_params(
    const TransitionKernel& P, DriftKind kind, const Functional& V,
    const std::optional<Functional>& W, const std::vector<int>& C);

// Checks that a passing (DVk) certificate implies the matching (Vk)
// certificate with the same constants (Jensen).  When the (DVk) input fails,
// nothing is asserted.
struct DvImpliesVReport {
  DriftCertificate dv;
  DriftCertificate v;
  bool asserted = false;
};

DvImpliesVReport dv_implies_v_check(const TransitionKernel& P,
                                    const Functional& V,
                                    const std::optional<Functional>& W,
                                    const std::vector<int>& C, double delta,
                                    double b, int k);

// One-step form of the exponential supermartingale inequality:
// P e^V <= exp(V - delta W + b 1_C), checked entirely in the log domain.
// The verdict coincides with check_drift(DV3).
struct SupermartingaleReport {
  bool holds = false;
  Functional slack;
};

SupermartingaleReport supermartingale_check(const TransitionKernel& P,
                                            const Functional& V,
                                            const Functional& W,
                                            const std::vector<int>& C,
                                            double delta, double b);

// Sublevel set {x : W(x) <= r}.
std::vector<int> sublevel_set(const Functional& W, double r);

// Uniform condition (U): P^{T1}(x, A) <= b0 (1/T2) sum_{t<=T2} P^t(y, A),
// reduced to singleton sets A (sufficient on finite spaces by additivity).
// doeblin_deltas(n) = max |P^n(x,y) - pi(y)| / pi(y).
struct ConditionUReport {
  int T1 = 1;
  int T2 = 1;
  double b0 = 0.0;  // +infinity when (U) fails
  bool holds = false;
  std::vector<double> doeblin_deltas;
};

ConditionUReport check_condition_U(const TransitionKernel& P, int T1, int T2,
                                   int delta_cap = 50);

// Lyapunov function per the Doeblin/(U) recipe:
// V(x) = 1 + log E_x[exp(eps sum_{i<T1} r^i V0(Phi(i)))] with r > 1 and
// eps small enough; under condition (U) this V satisfies (DV4).
Functional condition_u_dv4_function(const TransitionKernel& P, int T1,
                                    const Functional& V0, double r = 2.0);

// Constructive Lyapunov instance fitted from the chain itself:
// V = 1 + log E_x[exp(eta0 tau_C)] for a one-state C, with (W, C, delta, b)
// completing a passing (DV3) certificate.
struct FittedDrift {
  Functional V;
  Functional W;
  std::vector<int> C;
  double delta = 0.0;
  double b = 0.0;
};

FittedDrift fit_lyapunov_dv3(const TransitionKernel& P);

// Constructive (DV2) => (V4) builder:
// V*(x) = E_x[sum_{k=0}^{sigma_A} exp(eta V(Phi(k)) + eta k / 2)], summed by
// a linear solve on A^c.  The certificate has rho = e^{-eta/2}, i.e.
// delta = 1 - e^{-eta/2}, and P V* <= e^{-eta/2} V* + b' 1_A.
struct V4Construction {
  Functional V_star;
  DriftCertificate certificate;
  double rho = 0.0;
  double b_prime = 0.0;
  // Finite norm-equivalence ratios between V* and e^{eta V}.
  double norm_ratio_up = 0.0;    // || V* ||_{e^{eta V}}
  double norm_ratio_down = 0.0;  // || e^{eta V} ||_{V*}
};

V4Construction build_v4_from_dv2(const TransitionKernel& P,
                                 const Functional& V,
                                 const std::vector<int>& A, double eta);

}  // namespace mcld

#endif  // MCLD_DRIFT_HPP_
