#include "mcld/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mcld/simulate.hpp"

namespace mcld {

namespace {

double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / M_SQRT2)); }

std::vector<std::string> grid_labels(const Vector& x) {
  std::vector<std::string> labels;
  labels.reserve(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::ostringstream s;
    s.precision(6);
    s << x(i);
    labels.push_back(s.str());
  }
  return labels;
}

}  // namespace

OuModel ou_grid(double delta, double sigma, const GridSpec& grid,
                double max_mass_loss) {
  if (!(delta > 0.0) || delta > 1.0) {
    throw std::invalid_argument("delta must lie in (0, 1]");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (grid.points < 3 || !(grid.lo < grid.hi)) {
    throw std::invalid_argument("grid needs lo < hi and at least 3 points");
  }
  const int m = grid.points;
  const double h = (grid.hi - grid.lo) / (m - 1);
  Vector x(m);
  for (int i = 0; i < m; ++i) x(i) = grid.lo + i * h;

  Matrix rows(m, m);
  for (int i = 0; i < m; ++i) {
    const double mean = (1.0 - delta) * x(i);
    double interior = 0.0;
    for (int j = 0; j < m; ++j) {
      const double lo_edge = (x(j) - 0.5 * h - mean) / sigma;
      const double hi_edge = (x(j) + 0.5 * h - mean) / sigma;
      rows(i, j) = normal_cdf(hi_edge) - normal_cdf(lo_edge);
      interior += rows(i, j);
    }
    if (1.0 - interior > max_mass_loss) {
      std::ostringstream msg;
      msg << "row at x = " << x(i) << " loses " << (1.0 - interior)
          << " mass to truncation; widen the grid";
      throw std::invalid_argument(msg.str());
    }
  }

  OuModel model;
  model.grid_x = x;
  model.kernel =
      TransitionKernel(std::move(rows), grid_labels(x), /*renormalize=*/true);

  // Largest eps0 in {2^-1 .. 2^-10} with a passing (DV3) fit.
  for (int k = 1; k <= 10; ++k) {
    const double eps0 = std::ldexp(1.0, -k);
    const Functional V(
        (1.0 + eps0 * x.array().square()).matrix(), "V_ou");
    const Vector H = nonlinear_generator(model.kernel, V).values;

    std::vector<double> sorted(V.values.data(), V.values.data() + m);
    std::nth_element(sorted.begin(), sorted.begin() + m / 2, sorted.end());
    const std::vector<int> C = sublevel_set(V, sorted[m / 2]);
    std::vector<bool> in_C(m, false);
    for (int i : C) in_C[i] = true;

    double dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (!in_C[i]) dmin = std::min(dmin, -H(i));
    }
    if (!(dmin > 0.0)) continue;

    Vector w = Vector::Ones(m);
    for (int i = 0; i < m; ++i) {
      if (!in_C[i]) w(i) = std::max(1.0, -H(i) / dmin);
    }
    double b = 0.0;
    for (int i : C) b = std::max(b, H(i) + dmin);

    const Functional W(w, "W_ou");
    if (!check_drift(model.kernel, DriftKind::DV3, V, W, C, dmin, b).holds) {
      continue;
    }
    model.V = V;
    model.W = W;
    model.C = C;
    model.delta = dmin;
    model.b = b;
    model.epsilon0 = eps0;
    return model;
  }
  throw std::runtime_error("no eps0 in the scan range yields a (DV3) fit");
}

double smoluchowski_generator_formula(double u_x, double u_xx, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return -0.5 * u_x * u_x / (sigma * sigma) + 0.5 * u_xx;
}

TransitionKernel two_state(double p, double q) {
  if (!(p > 0.0) || p > 1.0 || !(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("two_state needs p, q in (0, 1]");
  }
  Matrix rows(2, 2);
  rows << 1.0 - p, p, q, 1.0 - q;
  return TransitionKernel(std::move(rows), {"0", "1"});
}

TransitionKernel cycle(int n) {
  if (n < 1) throw std::invalid_argument("cycle needs n >= 1");
  Matrix rows = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) rows(i, (i + 1) % n) = 1.0;
  return TransitionKernel(std::move(rows));
}

TransitionKernel iid_rows(const Measure& pi) {
  const Eigen::Index n = pi.size();
  if (std::abs(pi.weights.sum() - 1.0) > kMassTol) {
    throw std::invalid_argument("iid_rows needs a probability vector");
  }
  Matrix rows(n, n);
  for (Eigen::Index i = 0; i < n; ++i) rows.row(i) = pi.weights.transpose();
  return TransitionKernel(std::move(rows));
}

TransitionKernel random_chain(int n, double density, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_chain needs n >= 1");
  if (density < 0.0 || density > 1.0) {
    throw std::invalid_argument("density must lie in [0, 1]");
  }
  Rng rng(seed);
  Matrix rows = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (rng.uniform() < density) rows(i, j) = 0.05 + 0.95 * rng.uniform();
    }
    // Self-loop and Hamilton-cycle mass guarantee irreducible + aperiodic.
    rows(i, i) += 0.2;
    rows(i, (i + 1) % n) += 0.2;
    rows.row(i) /= rows.row(i).sum();
  }
  return TransitionKernel(std::move(rows));
}

CoboundaryExample coboundary_example() {
  // States (prev, cur) over the two_state(0.1, 0.2) base chain; moving from
  // (a, b) to (b, c) with the base probability of b -> c.
  const TransitionKernel base = two_state(0.1, 0.2);
  Matrix rows = Matrix::Zero(4, 4);
  const auto id = [](int a, int b) { return 2 * a + b; };
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 2; ++c) {
        rows(id(a, b), id(b, c)) = base.rows(b, c);
      }
    }
  }
  CoboundaryExample ex;
  ex.kernel = TransitionKernel(std::move(rows), {"00", "01", "10", "11"});

  Vector f_plus(4), g(4);
  const double g0 = 0.0, g1 = 0.7;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      f_plus(id(a, b)) = b == 1 ? 1.0 : 0.0;  // indicator of cur == 1
      g(id(a, b)) = a == 1 ? g1 : g0;         // depends on prev only
    }
  }
  ex.F_plus = Functional(f_plus, "F_plus");
  ex.G = Functional(g, "G");
  const Vector pg = ex.kernel.rows * g;
  ex.F = Functional(f_plus + g - pg, "F_cob");
  return ex;
}

}  // namespace mcld
