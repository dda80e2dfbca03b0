#include "mcld/serialize.hpp"

#include <cstdio>

namespace mcld {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

Json to_json(const TransitionKernel& P) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    rows.push_back(to_json(Vector(P.rows.row(i))));
  }
  return Json{{"states", P.states}, {"rows", rows}};
}

TransitionKernel kernel_from_json(const Json& j) {
  if (!j.contains("rows")) throw std::invalid_argument("kernel needs 'rows'");
  const Json& rows = j.at("rows");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n) {
      throw std::invalid_argument("kernel rows must be square");
    }
    for (Eigen::Index k = 0; k < n; ++k) p(i, k) = rows[i][k].get<double>();
  }
  std::vector<std::string> labels;
  if (j.contains("states")) {
    labels = j.at("states").get<std::vector<std::string>>();
  }
  return TransitionKernel(std::move(p), std::move(labels));
}

Json to_json(const Functional& f) { return to_json(f.values); }

Json to_json(const Measure& m) { return to_json(m.weights); }

Json to_json(const PairMeasure& gamma) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < gamma.weights.rows(); ++i) {
    rows.push_back(to_json(Vector(gamma.weights.row(i))));
  }
  return rows;
}

namespace {

Json complex_vector_to_json(const VectorC& v, bool real_only) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (real_only) {
      arr.push_back(v(i).real());
    } else {
      arr.push_back(Json{{"re", v(i).real()}, {"im", v(i).imag()}});
    }
  }
  return arr;
}

}  // namespace

Json to_json(const EigenTriple& triple) {
  const bool real = std::abs(triple.lambda.imag()) <= 1e-14 &&
                    triple.check_f.imag().cwiseAbs().maxCoeff() <= 1e-14;
  Json j;
  if (real) {
    j["lambda"] = triple.lambda.real();
  } else {
    j["lambda"] = Json{{"re", triple.lambda.real()},
                       {"im", triple.lambda.imag()}};
  }
  j["check_f"] = complex_vector_to_json(triple.check_f, real);
  j["check_mu"] = complex_vector_to_json(triple.check_mu, real);
  j["residuals"] = Json{{"right", triple.right_residual},
                        {"left", triple.left_residual}};
  return j;
}

Json to_json(const StructureReport& report) {
  return Json{{"irreducible", report.irreducible},
              {"period", report.period},
              {"aperiodic", report.aperiodic},
              {"classes", report.classes}};
}

Json to_json(const DriftCertificate& cert) {
  Json j{{"kind", to_string(cert.kind)},
         {"delta", cert.delta},
         {"b", cert.b},
         {"C", cert.C},
         {"slack", to_json(cert.slack.values)},
         {"holds", cert.holds}};
  if (cert.W) j["W"] = to_json(*cert.W);
  j["V"] = to_json(cert.V);
  if (cert.small_set) {
    j["small_set"] = Json{{"t", cert.small_set->t},
                          {"epsilon", cert.small_set->epsilon},
                          {"nu", to_json(cert.small_set->nu)}};
  }
  return j;
}

Json to_json(const ConditionUReport& report) {
  Json j{{"T1", report.T1},
         {"T2", report.T2},
         {"holds", report.holds},
         {"doeblin_deltas", report.doeblin_deltas}};
  if (std::isfinite(report.b0)) {
    j["b0"] = report.b0;
  } else {
    j["b0"] = "infinity";
  }
  return j;
}

Json to_json(const RatePoint& rp) {
  return Json{{"c", rp.c},
              {"a", rp.a},
              {"J", rp.J},
              {"sigma2", rp.sigma2},
              {"check_f_at", to_json(rp.check_f_at)}};
}

Json to_json(const TailAsymptotic& tail) {
  return Json{{"n", tail.n},
              {"c", tail.c},
              {"predicted", tail.predicted},
              {"method", to_string(tail.method)},
              {"prefactor", tail.prefactor},
              {"exponent", tail.exponent}};
}

Json to_json(const TailEstimate& est) {
  return Json{{"value", est.value},
              {"std_error", est.std_error},
              {"reps", est.reps},
              {"method",
               est.method == EstimateMethod::naive ? "naive" : "tilted"},
              {"n", est.n},
              {"c", est.c}};
}

Json to_json(const LatticeInfo& info) {
  return Json{{"kind",
               info.kind == LatticeKind::lattice ? "lattice" : "nonlattice"},
              {"span", info.span},
              {"offset", info.offset}};
}

}  // namespace mcld
