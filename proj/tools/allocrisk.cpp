// allocrisk command-line interface.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "allocrisk/allocator.hpp"
#include "allocrisk/balance.hpp"
#include "allocrisk/io.hpp"
#include "allocrisk/risk.hpp"
#include "allocrisk/selftest.hpp"
#include "allocrisk/service.hpp"

namespace {

using namespace allocrisk;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

struct PriorArgs {
  bool flat = false;
  std::string prior_path;
  double a0 = 2.0;
  double b0 = 1.0;
  double e_sigma2 = 0.0;  // 0 = use the prior mean

  void attach(CLI::App* app) {
    app->add_flag("--flat", flat, "Flat conditional prior");
    app->add_option("--prior", prior_path, "Prior JSON file");
    app->add_option("--a0", a0, "Inverse-gamma shape for --flat")->check(CLI::PositiveNumber);
    app->add_option("--b0", b0, "Inverse-gamma scale for --flat")->check(CLI::PositiveNumber);
    app->add_option("--e-sigma2", e_sigma2, "Override E[sigma^2]")->check(CLI::PositiveNumber);
  }

  NigPrior load(std::size_t p) const {
    if (flat == !prior_path.empty()) {
      throw Error(ErrorCode::InvalidConfig, "give exactly one of --flat or --prior");
    }
    if (flat) return NigPrior::flat(p, a0, b0);
    std::ifstream in(prior_path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open " + prior_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, prior_path + ": " + e.what());
    }
    return io::prior_from_json(doc, p);
  }

  double scale(const NigPrior& prior) const {
    return e_sigma2 > 0.0 ? e_sigma2 : prior.expected_sigma2();
  }
};

struct OptimizerArgs {
  std::string mode = "exhaustive";
  bool equal_split = false;
  std::string sizes;
  std::size_t restarts = 20;
  std::size_t k = 1000;
  std::uint64_t seed = 0;
  std::size_t exhaustive_limit = 22;
  bool trace = false;

  void attach(CLI::App* app) {
    app->add_option("--mode", mode, "exhaustive | local | best-of-k");
    auto* eq = app->add_flag("--equal-split", equal_split, "Restrict to n_c = n_t");
    app->add_option("--sizes", sizes, "Fixed arm sizes n_c,n_t")->excludes(eq);
    app->add_option("--restarts", restarts, "Local search restarts");
    app->add_option("--k", k, "Draws for best-of-k");
    app->add_option("--seed", seed, "RNG seed (ALLOCRISK_SEED overrides)");
    app->add_option("--exhaustive-limit", exhaustive_limit, "Largest n for exhaustive search");
    app->add_flag("--trace", trace, "Keep the best-so-far trace");
  }

  OptimizerConfig config() const {
    OptimizerConfig cfg;
    cfg.mode = parse_mode(mode);
    if (equal_split) cfg.constraint = EqualSizes{};
    if (!sizes.empty()) {
      const auto comma = sizes.find(',');
      if (comma == std::string::npos) {
        throw Error(ErrorCode::InvalidConfig, "--sizes expects n_c,n_t");
      }
      try {
        cfg.constraint = FixedSizes{std::stoul(sizes.substr(0, comma)),
                                    std::stoul(sizes.substr(comma + 1))};
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "--sizes expects n_c,n_t");
      }
    }
    cfg.restarts = restarts;
    cfg.k = k;
    cfg.rng_seed = seed;
    if (const char* env = std::getenv("ALLOCRISK_SEED"); env != nullptr && *env != '\0') {
      try {
        cfg.rng_seed = std::stoull(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "ALLOCRISK_SEED must be an unsigned integer");
      }
    }
    cfg.exhaustive_limit = exhaustive_limit;
    cfg.keep_trace = trace;
    return cfg;
  }
};

struct InputArgs {
  std::string path;
  bool header = false;

  void attach(CLI::App* app) {
    app->add_option("covariates", path, "Covariate CSV file")->required();
    app->add_flag("--header", header, "First line is a header");
  }

  CovariateMatrix load() const { return io::load_covariates(path, header); }
};

struct OutputArgs {
  std::string format = "json";
  std::string output;

  void attach(CLI::App* app, bool with_format) {
    if (with_format) {
      app->add_option("--format", format, "json | csv")
          ->check(CLI::IsMember({"json", "csv"}));
    }
    app->add_option("--output,-o", output, "Write the report here instead of stdout");
  }

  void write(const std::string& text) const {
    if (output.empty()) {
      std::cout << text;
      return;
    }
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write " + output);
    out << text;
  }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string csv_summary(const OptimizationResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "field,value\n";
  out << "risk," << r.best_risk.risk << "\n";
  out << "size_term," << r.best_risk.size_term << "\n";
  out << "imbalance_quad," << r.best_risk.imbalance_quad << "\n";
  out << "mahalanobis,";
  if (r.best_risk.mahalanobis) out << *r.best_risk.mahalanobis;
  out << "\n";
  out << "n_c," << r.best_risk.n_c << "\nn_t," << r.best_risk.n_t << "\n";
  out << "evaluated," << r.evaluated << "\nties," << r.ties.size() << "\n";
  out << "row,w\n";
  for (std::size_t i = 0; i < r.best_alloc.size(); ++i) {
    out << i + 1 << "," << static_cast<int>(r.best_alloc.treated(i)) << "\n";
  }
  return out.str();
}

int exit_code_for(const Error& err) {
  switch (err.code()) {
    case ErrorCode::InfeasibleConstraint:
    case ErrorCode::OddN:
      return kExitInfeasible;
    default:
      return kExitError;
  }
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "cannot parse '" + cell + "' as a real");
    }
  }
  return out;
}

int run_session(const service::Response& r, const OutputArgs& out) {
  out.write(dump(r.body));
  if (r.status < 300) return kExitOk;
  if (r.body.value("code", "") == "InfeasibleConstraint") return kExitInfeasible;
  return kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-minimizing treatment allocation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io::kToolVersion));

  // allocate
  auto* allocate = app.add_subcommand("allocate", "Find the risk-minimizing allocation");
  InputArgs alloc_in;
  PriorArgs alloc_prior;
  OptimizerArgs alloc_opt;
  OutputArgs alloc_out;
  alloc_in.attach(allocate);
  alloc_prior.attach(allocate);
  alloc_opt.attach(allocate);
  alloc_out.attach(allocate, true);

  // risk
  auto* risk = app.add_subcommand("risk", "Risk of a given allocation");
  InputArgs risk_in;
  PriorArgs risk_prior;
  OutputArgs risk_out;
  std::string risk_w;
  bool verify = false;
  risk_in.attach(risk);
  risk_prior.attach(risk);
  risk_out.attach(risk, false);
  risk->add_option("--w", risk_w, "Allocation, e.g. 0,1,1,0")->required();
  risk->add_flag("--verify", verify, "Cross-check against explicit factorization");

  // check
  auto* check = app.add_subcommand("check", "Equal-split sufficient condition");
  InputArgs check_in;
  OutputArgs check_out;
  bool check_optimize = false;
  std::uint64_t check_seed = 0;
  std::size_t check_limit = 22;
  check_in.attach(check);
  check_out.attach(check, false);
  check->add_flag("--optimize", check_optimize, "Also report whether the optimum is equal");
  check->add_option("--seed", check_seed, "RNG seed for large n");
  check->add_option("--exhaustive-limit", check_limit, "Largest n for enumeration");

  // session
  auto* session = app.add_subcommand("session", "Sequential sessions in a local data directory");
  session->require_subcommand(1);
  std::string data_dir = "sessions";
  session->add_option("--data-dir", data_dir, "Session directory");
  OutputArgs session_out;
  session_out.attach(session, false);

  auto* s_open = session->add_subcommand("open", "Open a session");
  PriorArgs open_prior;
  std::size_t open_p = 0;
  open_prior.attach(s_open);
  s_open->add_option("--p", open_p, "Number of covariates")->required();

  auto* s_batch = session->add_subcommand("batch", "Allocate an arriving batch");
  std::string batch_id;
  InputArgs batch_in;
  std::string batch_quota;
  std::uint64_t batch_rev = 0;
  std::string batch_mode = "exhaustive";
  std::uint64_t batch_seed = 0;
  s_batch->add_option("--id", batch_id, "Session id")->required();
  batch_in.attach(s_batch);
  s_batch->add_option("--quota", batch_quota, "Arm sizes n_c,n_t");
  s_batch->add_option("--expected-revision", batch_rev, "Current revision")->required();
  s_batch->add_option("--mode", batch_mode, "exhaustive | local | best-of-k");
  s_batch->add_option("--seed", batch_seed, "RNG seed");

  auto* s_outcomes = session->add_subcommand("outcomes", "Record outcomes of a past batch");
  std::string out_id;
  std::size_t out_index = 0;
  std::string out_y;
  std::uint64_t out_rev = 0;
  s_outcomes->add_option("--id", out_id, "Session id")->required();
  s_outcomes->add_option("--batch-index", out_index, "Batch index (0-based)")->required();
  s_outcomes->add_option("--y", out_y, "Outcomes, comma separated")->required();
  s_outcomes->add_option("--expected-revision", out_rev, "Current revision")->required();

  auto* s_show = session->add_subcommand("show", "Audit view of a session");
  std::string show_id;
  s_show->add_option("--id", show_id, "Session id")->required();

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Closed forms against explicit factorization");
  SelftestOptions st;
  OutputArgs st_out;
  selftest->add_option("--seed", st.seed, "RNG seed (ALLOCRISK_SEED overrides)");
  selftest->add_option("--instances", st.instances, "Number of random instances");
  st_out.attach(selftest, false);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string serve_dir = "sessions";
  std::string static_dir;
  serve->add_option("--port", port, "Port");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--data-dir", serve_dir, "Session directory");
  serve->add_option("--static-dir", static_dir, "Serve web assets from here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*allocate) {
      const CovariateMatrix x = alloc_in.load();
      const NigPrior prior = alloc_prior.load(x.p());
      const OptimizerConfig cfg = alloc_opt.config();
      const double e = alloc_prior.scale(prior);
      const OptimizationResult result = optimize(prior, x, cfg, e);
      if (alloc_out.format == "csv") {
        alloc_out.write(csv_summary(result));
        return kExitOk;
      }
      json report = io::report_envelope("allocate");
      report["input"] = {{"covariates", alloc_in.path}, {"n", x.n()}, {"p", x.p()}};
      report["prior"] = io::prior_to_json(prior);
      report["e_sigma2"] = e;
      report["config"] = io::to_json(cfg);
      report["result"] = io::to_json(result);
      if (alloc_opt.equal_split && prior.is_flat() && x.n() % 2 == 0) {
        EqualSplitOptions eo;
        eo.exhaustive_limit = cfg.exhaustive_limit;
        eo.rng_seed = cfg.rng_seed;
        report["equal_split"] = io::to_json(equal_split_condition(x, eo));
      }
      alloc_out.write(dump(report));
      return kExitOk;
    }

    if (*risk) {
      const CovariateMatrix x = risk_in.load();
      const NigPrior prior = risk_prior.load(x.p());
      const Allocation alloc = io::parse_allocation(risk_w);
      if (alloc.size() != x.n()) {
        throw Error(ErrorCode::LengthMismatch, "--w has " + std::to_string(alloc.size()) +
                                                   " entries, covariates have " +
                                                   std::to_string(x.n()) + " rows");
      }
      const double e = risk_prior.scale(prior);
      const RiskBreakdown rb = RiskEvaluator(EffectivePrior::from_prior(prior), x, e).evaluate(alloc);
      json report = io::report_envelope("risk");
      report["input"] = {{"covariates", risk_in.path}, {"n", x.n()}, {"p", x.p()}};
      report["allocation"] = io::to_json(alloc);
      report["e_sigma2"] = e;
      report["risk"] = io::to_json(rb);
      if (verify) {
        const double oracle = risk_direct(prior, x, alloc, e);
        json v = {{"oracle_risk", oracle},
                  {"relative_delta", std::abs(rb.risk - oracle) / std::abs(oracle)}};
        if (!prior.is_flat()) {
          const PriorDecomposition d = decompose_prior(prior);
          try {
            const double ps = risk_pseudo_sample(d, x, alloc, e).risk;
            v["pseudo_sample_risk"] = ps;
            v["pseudo_sample_delta"] = std::abs(ps - rb.risk) / std::abs(rb.risk);
          } catch (const Error& err) {
            v["pseudo_sample_risk"] = nullptr;
            v["pseudo_sample_note"] = err.qualified();
          }
        }
        report["verify"] = std::move(v);
      }
      risk_out.write(dump(report));
      return kExitOk;
    }

    if (*check) {
      const CovariateMatrix x = check_in.load();
      EqualSplitOptions eo;
      eo.run_optimizer = check_optimize;
      eo.rng_seed = check_seed;
      eo.exhaustive_limit = check_limit;
      json report = io::report_envelope("check");
      report["input"] = {{"covariates", check_in.path}, {"n", x.n()}, {"p", x.p()}};
      report["result"] = io::to_json(equal_split_condition(x, eo));
      check_out.write(dump(report));
      return kExitOk;
    }

    if (*session) {
      service::SessionService svc(data_dir);
      if (*s_open) {
        const NigPrior prior = open_prior.load(open_p);
        json body = {{"prior", io::prior_to_json(prior)}, {"p", open_p}};
        return run_session(svc.handle("POST", "/sessions", body.dump()), session_out);
      }
      if (*s_batch) {
        const CovariateMatrix u = batch_in.load();
        json body = {{"covariates", io::matrix_to_json(u.x())},
                     {"expected_revision", batch_rev},
                     {"mode", batch_mode},
                     {"seed", batch_seed}};
        if (!batch_quota.empty()) {
          const auto q = parse_reals(batch_quota);
          if (q.size() != 2) throw Error(ErrorCode::InvalidConfig, "--quota expects n_c,n_t");
          body["quota"] = {static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1])};
        }
        return run_session(svc.handle("POST", "/sessions/" + batch_id + "/batches", body.dump()),
                           session_out);
      }
      if (*s_outcomes) {
        json body = {{"batch_index", out_index},
                     {"y", parse_reals(out_y)},
                     {"expected_revision", out_rev}};
        return run_session(svc.handle("POST", "/sessions/" + out_id + "/outcomes", body.dump()),
                           session_out);
      }
      return run_session(svc.handle("GET", "/sessions/" + show_id, ""), session_out);
    }

    if (*selftest) {
      if (const char* env = std::getenv("ALLOCRISK_SEED"); env != nullptr && *env != '\0') {
        st.seed = std::stoull(env);
      }
      const SelftestReport r = run_selftest(st);
      json report = io::report_envelope("selftest");
      report["config"] = {{"seed", st.seed}, {"instances", st.instances}};
      report["result"] = to_json(r);
      st_out.write(dump(report));
      return r.passed ? kExitOk : kExitError;
    }

    if (*serve) {
      std::optional<std::filesystem::path> assets;
      if (!static_dir.empty()) assets = static_dir;
      std::cerr << "listening on " << host << ":" << port << "\n";
      return service::run_server(host, port, serve_dir, assets);
    }
  } catch (const Error& err) {
    std::cerr << io::error_to_json(err).dump() << "\n";
    return exit_code_for(err);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}
