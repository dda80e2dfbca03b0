#ifndef MCLD_SERIALIZE_HPP_
#define MCLD_SERIALIZE_HPP_

#include <json.hpp>

#include "mcld/drift.hpp"
#include "mcld/rate.hpp"
#include "mcld/simulate.hpp"
#include "mcld/spectral.hpp"

namespace mcld {

using Json = nlohmann::json;

// Decimal with 17 significant digits; round-trips doubles exactly.
std::string format_g17(double x);

Json to_json(const Vector& v);
Vector vector_from_json(const Json& j);

// {"states": [...], "rows": [[...]]}
Json to_json(const TransitionKernel& P);
TransitionKernel kernel_from_json(const Json& j);

Json to_json(const Functional& f);
Json to_json(const Measure& m);
Json to_json(const PairMeasure& gamma);

// {"lambda": ..., "check_f": [...], "check_mu": [...], "residuals": {...}}
Json to_json(const EigenTriple& triple);

Json to_json(const StructureReport& report);
Json to_json(const DriftCertificate& cert);
Json to_json(const ConditionUReport& report);
Json to_json(const RatePoint& rp);
Json to_json(const TailAsymptotic& tail);
Json to_json(const TailEstimate& est);
Json to_json(const LatticeInfo& info);

}  // namespace mcld

#endif  // MCLD_SERIALIZE_HPP_
