#ifndef MCLD_SIMULATE_HPP_
#define MCLD_SIMULATE_HPP_

#include <cstdint>
#include <map>

#include "mcld/kernel.hpp"

namespace mcld {

// Counter-based stream: child(seed, i) opens an independent deterministic
// stream for replicate i, so parallel replicates reproduce exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng child(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed) ^ mix(0x9E3779B97F4A7C15ULL * (index + 1)));
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return (next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

// A sampled path Phi(0..n); states(0) is the start state.
struct Trajectory {
  int start = 0;
  std::vector<int> states;
  std::uint64_t seed = 0;

  // Prefix sums S_t = sum_{i<t} F(Phi(i)), t = 0..n, cached per label.
  const Vector& partial_sums(const Functional& F) const;

 private:
  mutable std::map<std::string, Vector> partial_sum_cache_;
};

// Reproducible inverse-CDF sampling over each row in state order.
Trajectory sample_path(const TransitionKernel& P, int x, long n,
                       std::uint64_t seed);

// Consecutive-pair occupation counts of a path.
struct EmpiricalPair {
  Matrix counts;
  long n_steps = 0;

  PairMeasure normalized() const {
    return PairMeasure(counts / static_cast<double>(n_steps));
  }
};

// Occupation measure over the first n states and the pair counts over the
// n consecutive transitions.
std::pair<Measure, EmpiricalPair> empirical_measures(const TransitionKernel& P,
                                                     const Trajectory& traj);

// I_2(L_{n,2}) at the requested checkpoints: the pair empirical measure is
// symmetrized to its average marginal (iterative proportional fitting)
// before the entropy-rate evaluation.
std::vector<std::pair<long, double>> pair_rate_convergence(
    const TransitionKernel& P, const Trajectory& traj,
    const std::vector<long>& checkpoints);

enum class EstimateMethod { naive, tilted };

struct TailEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long reps = 0;
  EstimateMethod method = EstimateMethod::naive;
  long n = 0;
  double c = 0.0;
};

// Plain Monte Carlo for P_x{S_n >= nc}.
TailEstimate tail_estimate_naive(const TransitionKernel& P,
                                 const Functional& F, int x, double c, long n,
                                 long reps, std::uint64_t seed,
                                 int threads = 1);

// Exponentially tilted importance sampling under the twisted chain of the
// rate point at c; the per-path weight is lambda^n chk_f(x) e^{-a S_n} /
// chk_f(Phi(n)).  The mean importance weight is asserted to be 1 within
// four standard errors.
TailEstimate tail_estimate_tilted(const TransitionKernel& P,
                                  const Functional& F, int x, double c, long n,
                                  long reps, std::uint64_t seed,
                                  int threads = 1);

// Monte Carlo check of the multiplicative mean ergodic theorem: the sample
// mean of exp(a S_n - n Lambda(aF)) against the target chk_f_a(x).
struct MmetEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double target = 0.0;
};

MmetEstimate mmet_monte_carlo(const TransitionKernel& P, const Functional& F,
                              double a, int x, long n, long reps,
                              std::uint64_t seed, int threads = 1);

}  // namespace mcld

#endif  // MCLD_SIMULATE_HPP_
