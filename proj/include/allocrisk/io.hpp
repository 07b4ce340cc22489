#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>  // vendored nlohmann/json

#include "allocrisk/allocator.hpp"
#include "allocrisk/balance.hpp"
#include "allocrisk/error.hpp"
#include "allocrisk/model.hpp"
#include "allocrisk/risk.hpp"
#include "allocrisk/sequential.hpp"

namespace allocrisk::io {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kToolName = "allocrisk";
inline constexpr const char* kToolVersion = "0.1.0";

/// Comma-separated reals, '.' decimal point, one unit per row. Row order is kept.
CovariateMatrix parse_covariates(std::string_view text, bool has_header);
CovariateMatrix load_covariates(const std::filesystem::path& path, bool has_header);

/// Parses "0,1,1,0" into an allocation.
Allocation parse_allocation(std::string_view text);

/// Accepted prior documents (exactly one of flat / v0 / decomposition / precision):
///   {"flat": true, "a0": 2, "b0": 1}
///   {"v0": {"nu": [[..],[..]], "rho": [[..],[..]], "gamma": [[..]]}, "zeta0": [..], "a0", "b0"}
///   {"v0": [[..full matrix..]], ...}
///   {"decomposition": {"h1", "h2", "b_rows", "d"}, "zeta0", "a0", "b0"}
///   {"precision": [[..]], "zeta0", "a0", "b0"}
/// When v0 blocks and a decomposition are both present the blocks are used.
/// `p` is required for a flat prior without its own "p" field.
NigPrior prior_from_json(const json& doc, std::optional<std::size_t> p = std::nullopt);
json prior_to_json(const NigPrior& prior);

json to_json(const RiskBreakdown& risk);
json to_json(const Allocation& alloc);
json to_json(const OptimizationResult& result);
json to_json(const EqualSplitReport& report);
json to_json(const OptimizerConfig& cfg);

json session_to_json(const SequentialSession& session);
/// Rebuilds the session by replaying its history; throws ParseError when the
/// stored totals disagree with the replay by more than 1e-9.
SequentialSession session_from_json(const json& doc);

json error_to_json(const Error& err);

/// Envelope shared by every CLI report.
json report_envelope(std::string_view command);

json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const json& j, const char* what);
VectorXd vector_from_json(const json& j, const char* what);

}  // namespace allocrisk::io
