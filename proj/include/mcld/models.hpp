#ifndef MCLD_MODELS_HPP_
#define MCLD_MODELS_HPP_

#include <cstdint>

#include "mcld/drift.hpp"

namespace mcld {

// Uniform discretization grid for the real line.
struct GridSpec {
  double lo = -8.0;
  double hi = 8.0;
  int points = 201;
};

// Truncated discrete-time Ornstein-Uhlenbeck chain on a grid, together with
// the Lyapunov pair certifying (DV3): V = 1 + eps0 x^2 with eps0 picked by
// scanning {2^-10 .. 2^-1} for the largest passing fit, and W shaped from
// the generator residual off the central sublevel set C.
struct OuModel {
  TransitionKernel kernel;
  Functional V;
  Functional W;
  std::vector<int> C;
  double delta = 0.0;
  double b = 0.0;
  double epsilon0 = 0.0;
  Vector grid_x;
};

OuModel ou_grid(double delta, double sigma, const GridSpec& grid,
                double max_mass_loss = 0.01);

// H(V) of the Smoluchowski diffusion at a point with potential derivatives
// u_x, u_xx: exactly -u_x^2 / (2 sigma^2) + u_xx / 2.
double smoluchowski_generator_formula(double u_x, double u_xx, double sigma);

// [[1-p, p], [q, 1-q]] on states {"0", "1"}.
TransitionKernel two_state(double p, double q);

// Deterministic n-cycle.
TransitionKernel cycle(int n);

// Every row equal to pi.
TransitionKernel iid_rows(const Measure& pi);

// Random chain made irreducible and aperiodic by mixing in a self-loop mass
// and a Hamilton cycle.
TransitionKernel random_chain(int n, double density, std::uint64_t seed);

// Pair-chain adaptation of the zero-variance coboundary construction:
// the chain records (previous, current) of a two-state base chain, F_plus is
// an indicator, G(prev,cur) = g(prev), and F = F_plus + (G - PG) telescopes
// along paths, so rate functions and F_max agree with those of F_plus.
struct CoboundaryExample {
  TransitionKernel kernel;
  Functional F;
  Functional F_plus;
  Functional G;
};

CoboundaryExample coboundary_example();

}  // namespace mcld

#endif  // MCLD_MODELS_HPP_
