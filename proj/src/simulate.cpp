#include "mcld/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mcld/rate.hpp"
#include "mcld/spectral.hpp"

namespace mcld {

namespace {

// Row-wise cumulative sums for inverse-CDF sampling.
Matrix row_cumsum(const Matrix& P) {
  Matrix cum = P;
  for (Eigen::Index x = 0; x < P.rows(); ++x) {
    for (Eigen::Index y = 1; y < P.cols(); ++y) cum(x, y) += cum(x, y - 1);
  }
  return cum;
}

int draw(const Matrix& cum, int x, double u) {
  const Eigen::Index n = cum.cols();
  for (Eigen::Index y = 0; y < n; ++y) {
    if (u < cum(x, y)) return static_cast<int>(y);
  }
  return static_cast<int>(n - 1);
}

// Deterministic parallel map over replicates: each replicate gets its own
// counter-based stream and a fixed-order reduction.
template <typename Body>
void for_each_replicate(long reps, int threads, Body body) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (long r = 0; r < reps; ++r) body(r);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<long> counter{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (long r = counter.fetch_add(1); r < reps;
           r = counter.fetch_add(1)) {
        body(r);
      }
    });
  }
  for (auto& th : pool) th.join();
}

struct MeanVar {
  double mean = 0.0;
  double sd = 0.0;
};

MeanVar mean_and_sd(const std::vector<double>& xs) {
  const long n = static_cast<long>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, n > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
}

}  // namespace

const Vector& Trajectory::partial_sums(const Functional& F) const {
  const std::string key = F.label.empty() ? "<unnamed>" : F.label;
  auto it = partial_sum_cache_.find(key);
  if (it != partial_sum_cache_.end() &&
      it->second.size() == static_cast<Eigen::Index>(states.size())) {
    return it->second;
  }
  Vector sums(states.size());
  double acc = 0.0;
  for (size_t t = 0; t < states.size(); ++t) {
    sums(t) = acc;
    acc += F.values(states[t]);
  }
  return partial_sum_cache_[key] = std::move(sums);
}

Trajectory sample_path(const TransitionKernel& P, int x, long n,
                       std::uint64_t seed) {
  if (x < 0 || x >= P.size()) {
    throw std::invalid_argument("start state out of range");
  }
  if (n < 1) throw std::invalid_argument("path length must be >= 1");
  const Matrix cum = row_cumsum(P.rows);
  Rng rng(seed);
  Trajectory traj;
  traj.start = x;
  traj.seed = seed;
  traj.states.reserve(n + 1);
  traj.states.push_back(x);
  int cur = x;
  for (long t = 0; t < n; ++t) {
    cur = draw(cum, cur, rng.uniform());
    traj.states.push_back(cur);
  }
  return traj;
}

std::pair<Measure, EmpiricalPair> empirical_measures(const TransitionKernel& P,
                                                     const Trajectory& traj) {
  const Eigen::Index ns = P.size();
  const long n = static_cast<long>(traj.states.size()) - 1;
  Vector occ = Vector::Zero(ns);
  Matrix pairs = Matrix::Zero(ns, ns);
  for (long t = 0; t < n; ++t) {
    occ(traj.states[t]) += 1.0;
    pairs(traj.states[t], traj.states[t + 1]) += 1.0;
  }
  EmpiricalPair ep;
  ep.counts = std::move(pairs);
  ep.n_steps = n;
  return {Measure(occ / static_cast<double>(n)), std::move(ep)};
}

namespace {

// Rescale a pair measure to share the average of its two marginals
// (iterative proportional fitting).
Matrix symmetrize_marginals(Matrix gamma) {
  for (int round = 0; round < 500; ++round) {
    const Vector r = gamma.rowwise().sum();
    const Vector c = gamma.colwise().sum();
    if ((r - c).cwiseAbs().maxCoeff() <= 1e-13) break;
    const Vector m = 0.5 * (r + c);
    for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
      if (r(i) > 0.0) gamma.row(i) *= m(i) / r(i);
    }
    const Vector c2 = gamma.colwise().sum();
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      if (c2(j) > 0.0) gamma.col(j) *= m(j) / c2(j);
    }
  }
  return gamma / gamma.sum();
}

}  // namespace

std::vector<std::pair<long, double>> pair_rate_convergence(
    const TransitionKernel& P, const Trajectory& traj,
    const std::vector<long>& checkpoints) {
  const Eigen::Index ns = P.size();
  const long n = static_cast<long>(traj.states.size()) - 1;
  std::vector<long> points = checkpoints;
  std::sort(points.begin(), points.end());

  std::vector<std::pair<long, double>> out;
  Matrix counts = Matrix::Zero(ns, ns);
  long t = 0;
  for (long cp : points) {
    if (cp < 1 || cp > n) {
      throw std::invalid_argument("checkpoint outside the sampled path");
    }
    for (; t < cp; ++t) counts(traj.states[t], traj.states[t + 1]) += 1.0;
    const Matrix gamma = symmetrize_marginals(counts / double(cp));
    out.emplace_back(cp, entropy_rate_pair(P, PairMeasure(gamma)));
  }
  return out;
}

TailEstimate tail_estimate_naive(const TransitionKernel& P,
                                 const Functional& F, int x, double c, long n,
                                 long reps, std::uint64_t seed, int threads) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  const Matrix cum = row_cumsum(P.rows);
  std::vector<double> hits(reps);
  for_each_replicate(reps, threads, [&](long r) {
    Rng rng = Rng::child(seed, r);
    int cur = x;
    double s = 0.0;
    for (long t = 0; t < n; ++t) {
      s += F.values(cur);
      cur = draw(cum, cur, rng.uniform());
    }
    hits[r] = s >= n * c - 1e-9 ? 1.0 : 0.0;
  });
  const MeanVar mv = mean_and_sd(hits);
  TailEstimate est;
  est.value = mv.mean;
  est.std_error = mv.sd / std::sqrt(static_cast<double>(reps));
  est.reps = reps;
  est.method = EstimateMethod::naive;
  est.n = n;
  est.c = c;
  return est;
}

TailEstimate tail_estimate_tilted(const TransitionKernel& P,
                                  const Functional& F, int x, double c, long n,
                                  long reps, std::uint64_t seed, int threads) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  const RatePoint rp = solve_rate_point(P, F, c);
  if (rp.a == 0.0) {
    return tail_estimate_naive(P, F, x, c, n, reps, seed, threads);
  }
  const double log_lambda = rp.a * c - rp.J;  // Lambda(aF)
  const Vector log_f = rp.check_f_at.values.array().log();
  const TwistedChain twisted = twisted_kernel(P, rp.check_f_at);
  const Matrix cum = row_cumsum(twisted.kernel.rows);

  std::vector<double> weighted(reps), weights(reps);
  for_each_replicate(reps, threads, [&](long r) {
    Rng rng = Rng::child(seed, r);
    int cur = x;
    double s = 0.0;
    for (long t = 0; t < n; ++t) {
      s += F.values(cur);
      cur = draw(cum, cur, rng.uniform());
    }
    const double log_w =
        n * log_lambda + log_f(x) - rp.a * s - log_f(cur);
    const double w = std::exp(log_w);
    weights[r] = w;
    weighted[r] = s >= n * c - 1e-9 ? w : 0.0;
  });

  const MeanVar mw = mean_and_sd(weights);
  const double w_se = mw.sd / std::sqrt(static_cast<double>(reps));
  if (std::abs(mw.mean - 1.0) > 4.0 * w_se) {
    throw std::runtime_error(
        "likelihood-ratio sanity failed: mean weight " +
        std::to_string(mw.mean) + " +- " + std::to_string(w_se));
  }

  const MeanVar mv = mean_and_sd(weighted);
  TailEstimate est;
  est.value = mv.mean;
  est.std_error = mv.sd / std::sqrt(static_cast<double>(reps));
  est.reps = reps;
  est.method = EstimateMethod::tilted;
  est.n = n;
  est.c = c;
  return est;
}

MmetEstimate mmet_monte_carlo(const TransitionKernel& P, const Functional& F,
                              double a, int x, long n, long reps,
                              std::uint64_t seed, int threads) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  const double lambda_a = lambda_of(P, F, a);
  const EigenTriple triple =
      principal_eigen(scale_kernel(P, F, Complex(a, 0.0)));
  const Matrix cum = row_cumsum(P.rows);

  std::vector<double> values(reps);
  for_each_replicate(reps, threads, [&](long r) {
    Rng rng = Rng::child(seed, r);
    int cur = x;
    double s = 0.0;
    for (long t = 0; t < n; ++t) {
      s += F.values(cur);
      cur = draw(cum, cur, rng.uniform());
    }
    values[r] = std::exp(a * s - n * lambda_a);
  });
  const MeanVar mv = mean_and_sd(values);
  MmetEstimate est;
  est.estimate = mv.mean;
  est.std_error = mv.sd / std::sqrt(static_cast<double>(reps));
  est.target = triple.check_f(x).real();
  return est;
}

}  // namespace mcld
