#include "allocrisk/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace allocrisk::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string cell_name(std::size_t line, std::size_t col) {
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

double number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw Error(ErrorCode::InvalidPrior, std::string("prior field '") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

}  // namespace

CovariateMatrix parse_covariates(std::string_view text, bool has_header) {
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto cells = split(line, ',');
    if (rows.empty()) {
      width = cells.size();
    } else if (cells.size() != width) {
      throw Error(ErrorCode::RaggedRows, "line " + std::to_string(line_no) + " has " +
                                             std::to_string(cells.size()) + " cells, expected " +
                                             std::to_string(width));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string_view cell = trim(cells[c]);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        throw Error(ErrorCode::ParseError, "cannot parse '" + std::string(cell) + "' at " +
                                               cell_name(line_no, c + 1) + " as a finite real");
      }
      row.push_back(value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyFile, "covariate file has no data rows");

  MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return CovariateMatrix(std::move(x));
}

CovariateMatrix load_covariates(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_covariates(buf.str(), has_header);
}

Allocation parse_allocation(std::string_view text) {
  std::vector<std::uint8_t> w;
  for (std::string_view cell : split(trim(text), ',')) {
    cell = trim(cell);
    if (cell == "0") {
      w.push_back(0);
    } else if (cell == "1") {
      w.push_back(1);
    } else {
      throw Error(ErrorCode::ParseError, "allocation entries must be 0 or 1, got '" +
                                             std::string(cell) + "'");
    }
  }
  return Allocation(std::move(w));
}

json matrix_to_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, std::string(what) + " must be an array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  MatrixXd out;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array()) {
      throw Error(ErrorCode::ParseError, std::string(what) + " rows must be arrays");
    }
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      out.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::RaggedRows, std::string(what) + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row.at(static_cast<std::size_t>(c));
      if (!v.is_number()) {
        throw Error(ErrorCode::ParseError, std::string(what) + " entries must be numbers");
      }
      out(i, c) = v.get<double>();
    }
  }
  if (cols < 0) return MatrixXd(0, 0);
  return out;
}

VectorXd vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, std::string(what) + " must be an array");
  VectorXd out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::ParseError, std::string(what) + " entries must be numbers");
    }
    out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return out;
}

namespace {

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json row_to_json(const RowVectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd zeta_or_zero(const json& doc, Eigen::Index dim) {
  if (!doc.contains("zeta0")) return VectorXd::Zero(dim);
  VectorXd z = vector_from_json(doc.at("zeta0"), "zeta0");
  if (z.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "zeta0 has length " + std::to_string(z.size()) + ", expected " +
                    std::to_string(dim));
  }
  return z;
}

}  // namespace

NigPrior prior_from_json(const json& doc, std::optional<std::size_t> p) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidPrior, "prior must be a JSON object");
  const double a0 = number(doc, "a0");
  const double b0 = number(doc, "b0");
  const bool flat = doc.contains("flat") && doc.at("flat").is_boolean() && doc.at("flat").get<bool>();
  const bool has_v0 = doc.contains("v0");
  const bool has_decomp = doc.contains("decomposition");
  const bool has_precision = doc.contains("precision");
  const int forms = int{flat} + int{has_v0 || has_decomp} + int{has_precision};
  if (forms != 1) {
    throw Error(ErrorCode::InvalidPrior,
                "prior needs exactly one of flat, v0 / decomposition, or precision");
  }

  std::optional<std::size_t> declared = p;
  if (doc.contains("p")) {
    const auto doc_p = doc.at("p").get<std::size_t>();
    if (declared && *declared != doc_p) {
      throw Error(ErrorCode::DimensionMismatch, "prior p does not match covariate p");
    }
    declared = doc_p;
  }

  NigPrior prior = [&] {
    if (flat) {
      if (!declared) throw Error(ErrorCode::InvalidPrior, "flat prior needs p");
      return NigPrior::flat(*declared, a0, b0);
    }
    if (has_v0) {
      const json& v0 = doc.at("v0");
      MatrixXd full;
      if (v0.is_array()) {
        full = matrix_from_json(v0, "v0");
      } else {
        const MatrixXd nu = matrix_from_json(v0.at("nu"), "v0.nu");
        const MatrixXd rho = matrix_from_json(v0.at("rho"), "v0.rho");
        const MatrixXd gamma = matrix_from_json(v0.at("gamma"), "v0.gamma");
        const Eigen::Index dim = gamma.rows();
        if (nu.rows() != 2 || nu.cols() != 2 || rho.rows() != 2 || rho.cols() != dim ||
            gamma.cols() != dim) {
          throw Error(ErrorCode::DimensionMismatch, "v0 blocks must be 2x2, 2xp and pxp");
        }
        full.resize(dim + 2, dim + 2);
        full.topLeftCorner(2, 2) = nu;
        full.topRightCorner(2, dim) = rho;
        full.bottomLeftCorner(dim, 2) = rho.transpose();
        full.bottomRightCorner(dim, dim) = gamma;
      }
      auto out = NigPrior::from_covariance(zeta_or_zero(doc, full.rows()), full, a0, b0);
      (void)decompose_prior(out);  // surfaces SchurNotDiagonal for unusable blocks
      return out;
    }
    if (has_decomp) {
      const json& d = doc.at("decomposition");
      PriorDecomposition decomp;
      decomp.h1 = number(d, "h1");
      decomp.h2 = number(d, "h2");
      decomp.b_rows = matrix_from_json(d.at("b_rows"), "decomposition.b_rows");
      decomp.d = matrix_from_json(d.at("d"), "decomposition.d");
      if (decomp.d.rows() != decomp.d.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "decomposition.d must be square");
      }
      return NigPrior::from_decomposition(decomp, zeta_or_zero(doc, decomp.d.rows() + 2), a0, b0);
    }
    const MatrixXd precision = matrix_from_json(doc.at("precision"), "precision");
    return NigPrior::from_precision(zeta_or_zero(doc, precision.rows()), precision, a0, b0);
  }();

  if (declared && prior.p() != *declared) {
    throw Error(ErrorCode::DimensionMismatch, "prior has p = " + std::to_string(prior.p()) +
                                                  ", covariates have p = " +
                                                  std::to_string(*declared));
  }
  return prior;
}

json prior_to_json(const NigPrior& prior) {
  json out;
  out["a0"] = prior.a0();
  out["b0"] = prior.b0();
  switch (prior.origin()) {
    case NigPrior::Origin::Flat:
      out["flat"] = true;
      out["p"] = prior.p();
      return out;
    case NigPrior::Origin::Covariance:
      out["v0"] = matrix_to_json(prior.v0());
      break;
    case NigPrior::Origin::Precision:
      out["precision"] = matrix_to_json(prior.precision());
      break;
  }
  out["zeta0"] = vector_to_json(prior.zeta0());
  return out;
}

json to_json(const RiskBreakdown& risk) {
  json out;
  out["risk"] = risk.risk;
  out["contrast_variance"] = risk.contrast_variance;
  out["size_term"] = risk.size_term;
  out["imbalance_quad"] = risk.imbalance_quad;
  out["s_c"] = risk.s_c;
  out["s_t"] = risk.s_t;
  out["n_c"] = risk.n_c;
  out["n_t"] = risk.n_t;
  out["mahalanobis"] = risk.mahalanobis ? json(*risk.mahalanobis) : json(nullptr);
  return out;
}

json to_json(const Allocation& alloc) {
  json out = json::array();
  for (auto v : alloc.w()) out.push_back(static_cast<int>(v));
  return out;
}

json to_json(const OptimizationResult& result) {
  json out;
  out["best_allocation"] = to_json(result.best_alloc);
  json control = json::array();
  json treatment = json::array();
  for (std::size_t i = 0; i < result.best_alloc.size(); ++i) {
    (result.best_alloc.treated(i) ? treatment : control).push_back(i + 1);
  }
  out["control_rows"] = std::move(control);
  out["treatment_rows"] = std::move(treatment);
  out["risk"] = to_json(result.best_risk);
  json ties = json::array();
  for (const auto& t : result.ties) ties.push_back(to_json(t));
  out["ties"] = std::move(ties);
  out["evaluated"] = result.evaluated;
  out["skipped"] = result.skipped;
  out["dedup_active"] = result.dedup_active;
  if (!result.trace.empty()) out["trace"] = result.trace;
  return out;
}

json to_json(const EqualSplitReport& report) {
  json out;
  out["threshold"] = report.threshold;
  out["min_qform"] = report.min_qform;
  out["witness"] = to_json(report.witness);
  out["min_qform_uncentered"] = report.min_qform_uncentered;
  out["witness_uncentered"] = to_json(report.witness_uncentered);
  out["condition_met"] = report.condition_met;
  out["heuristic"] = report.heuristic;
  out["optimal_is_equal"] = report.optimal_is_equal ? json(*report.optimal_is_equal) : json(nullptr);
  if (report.optimal_alloc) out["optimal_allocation"] = to_json(*report.optimal_alloc);
  return out;
}

json to_json(const OptimizerConfig& cfg) {
  json out;
  out["mode"] = std::string(mode_name(cfg.mode));
  out["constraint"] = describe(cfg.constraint);
  out["restarts"] = cfg.restarts;
  out["k"] = cfg.k;
  out["rng_seed"] = cfg.rng_seed;
  out["exhaustive_limit"] = cfg.exhaustive_limit;
  return out;
}

json session_to_json(const SequentialSession& session) {
  json out;
  out["schema_version"] = kSchemaVersion;
  out["p"] = session.p();
  out["prior"] = prior_to_json(session.prior());
  json history = json::array();
  for (const auto& batch : session.history()) {
    json b;
    b["u"] = matrix_to_json(batch.u.x());
    b["w"] = to_json(batch.w);
    b["y"] = batch.y ? vector_to_json(*batch.y) : json(nullptr);
    b["contrast_variance"] = batch.contrast_variance;
    history.push_back(std::move(b));
  }
  out["history"] = std::move(history);
  const ArmTotals& t = session.totals();
  out["totals"] = {{"count_c", t.count_c},
                   {"count_t", t.count_t},
                   {"sum_c", row_to_json(t.sum_c)},
                   {"sum_t", row_to_json(t.sum_t)},
                   {"gram", matrix_to_json(t.gram)}};
  out["posterior"] = {
      {"a", session.a()}, {"b", session.b()}, {"scored_units", session.scored_units()}};
  return out;
}

SequentialSession session_from_json(const json& doc) {
  try {
    if (doc.at("schema_version").get<std::string>() != kSchemaVersion) {
      throw Error(ErrorCode::ParseError, "unsupported session schema version");
    }
    const auto p = doc.at("p").get<std::size_t>();
    SequentialSession session(prior_from_json(doc.at("prior"), p), p);
    std::vector<std::pair<std::size_t, VectorXd>> outcomes;
    const json& history = doc.at("history");
    for (std::size_t i = 0; i < history.size(); ++i) {
      const json& b = history[i];
      MatrixXd u = matrix_from_json(b.at("u"), "history.u");
      if (u.size() == 0) u.resize(0, static_cast<Eigen::Index>(p));
      std::vector<std::uint8_t> w = b.at("w").get<std::vector<std::uint8_t>>();
      session = session.with_batch(CovariateMatrix(std::move(u)), Allocation(std::move(w)),
                                   b.at("contrast_variance").get<double>());
      if (!b.at("y").is_null()) outcomes.emplace_back(i, vector_from_json(b.at("y"), "history.y"));
    }
    for (const auto& [index, y] : outcomes) session = session.with_outcomes(index, y);

    const json& t = doc.at("totals");
    const ArmTotals& replay = session.totals();
    const auto close = [](const MatrixXd& a, const MatrixXd& b) {
      return a.rows() == b.rows() && a.cols() == b.cols() && max_abs(a - b) <= 1e-9;
    };
    const bool ok = t.at("count_c").get<std::size_t>() == replay.count_c &&
                    t.at("count_t").get<std::size_t>() == replay.count_t &&
                    close(vector_from_json(t.at("sum_c"), "sum_c").transpose(), replay.sum_c) &&
                    close(vector_from_json(t.at("sum_t"), "sum_t").transpose(), replay.sum_t) &&
                    close(matrix_from_json(t.at("gram"), "gram"), replay.gram);
    if (!ok) throw Error(ErrorCode::ParseError, "stored totals disagree with replayed history");
    return session;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed session document: ") + e.what());
  }
}

json error_to_json(const Error& err) {
  return {{"code", std::string(err.name())}, {"message", err.what()}, {"detail", err.qualified()}};
}

json report_envelope(std::string_view command) {
  json out;
  out["schema_version"] = kSchemaVersion;
  out["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  out["command"] = std::string(command);
  return out;
}

}  // namespace allocrisk::io
