// Thin pybind11 layer. Structured results cross the boundary as the same JSON
// documents the CLI and service emit, converted to python dicts.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <variant>

#include "allocrisk/allocator.hpp"
#include "allocrisk/balance.hpp"
#include "allocrisk/error.hpp"
#include "allocrisk/io.hpp"
#include "allocrisk/risk.hpp"
#include "allocrisk/selftest.hpp"
#include "allocrisk/sequential.hpp"

namespace py = pybind11;
using namespace allocrisk;
using io::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

NigPrior prior_or_flat(const py::object& prior, std::size_t p) {
  if (prior.is_none()) return NigPrior::flat(p);
  return io::prior_from_json(from_py(prior), p);
}

SizeConstraint constraint_from(const py::object& sizes) {
  if (sizes.is_none()) return FreeSizes{};
  if (py::isinstance<py::str>(sizes)) {
    const auto s = sizes.cast<std::string>();
    if (s == "equal") return EqualSizes{};
    if (s == "free") return FreeSizes{};
    throw Error(ErrorCode::InvalidConfig, "sizes must be 'free', 'equal' or (n_c, n_t)");
  }
  const auto pair = sizes.cast<std::pair<std::size_t, std::size_t>>();
  return FixedSizes{pair.first, pair.second};
}

OptimizerConfig config_from(const std::string& mode, const py::object& sizes, std::uint64_t seed,
                            std::size_t restarts, std::size_t k, std::size_t exhaustive_limit,
                            bool trace) {
  OptimizerConfig cfg;
  cfg.mode = parse_mode(mode);
  cfg.constraint = constraint_from(sizes);
  cfg.rng_seed = seed;
  cfg.restarts = restarts;
  cfg.k = k;
  cfg.exhaustive_limit = exhaustive_limit;
  cfg.keep_trace = trace;
  return cfg;
}

double resolve_e(const NigPrior& prior, std::optional<double> e_sigma2) {
  return e_sigma2 ? *e_sigma2 : prior.expected_sigma2();
}

// Session wrapper with value semantics hidden behind a mutable python object.
class PySession {
 public:
  PySession(const py::object& prior, std::size_t p) : s_(open_session(prior_or_flat(prior, p), p)) {}
  explicit PySession(SequentialSession s) : s_(std::move(s)) {}

  py::object allocate(const MatrixXd& u, const std::optional<std::pair<std::size_t, std::size_t>>& quota,
                      const std::string& mode, std::uint64_t seed, std::size_t restarts) {
    BatchRequest req{CovariateMatrix(u), std::nullopt, OptimizerConfig{}};
    if (quota) req.quota = FixedSizes{quota->first, quota->second};
    req.optimizer.mode = parse_mode(mode);
    req.optimizer.rng_seed = seed;
    req.optimizer.restarts = restarts;
    BatchDecision d = allocate_batch(s_, req);
    s_ = std::move(d.session);
    json out;
    out["allocation"] = io::to_json(d.alloc);
    out["risk"] = io::to_json(d.risk);
    out["batch_index"] = s_.history().size() - 1;
    return to_py(out);
  }

  void record(std::size_t batch_index, const VectorXd& y) { s_ = record_outcomes(s_, batch_index, y); }

  const SequentialSession& state() const { return s_; }

 private:
  SequentialSession s_;
};

}  // namespace

PYBIND11_MODULE(_allocrisk, m) {
  m.doc() = "Covariate-balancing treatment allocation under a normal-inverse-gamma model";
  m.attr("__version__") = std::string(io::kToolVersion);

  // Leaked on purpose: the translator may run during interpreter teardown.
  static PyObject* error_type =
      py::exception<Error>(m, "AllocriskError", PyExc_ValueError).inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.qualified() + ": " + e.what());
      exc.attr("code") = std::string(e.name());
      exc.attr("qualified") = e.qualified();
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("counterexample_table", [] { return counterexample_table().x(); },
        "The 8 x 3 covariate table whose optimal allocation is unequal.");

  m.def(
      "risk",
      [](const MatrixXd& x, const std::vector<std::uint8_t>& w, const py::object& prior,
         std::optional<double> e_sigma2) {
        const CovariateMatrix cx(x);
        const NigPrior pr = prior_or_flat(prior, cx.p());
        const RiskEvaluator ev(EffectivePrior::from_prior(pr), cx, resolve_e(pr, e_sigma2));
        return to_py(io::to_json(ev.evaluate(Allocation(w))));
      },
      py::arg("x"), py::arg("w"), py::arg("prior") = py::none(), py::arg("e_sigma2") = py::none(),
      "Risk breakdown of allocation w; prior=None means flat.");

  m.def(
      "risk_direct",
      [](const MatrixXd& x, const std::vector<std::uint8_t>& w, const py::object& prior,
         std::optional<double> e_sigma2) {
        const CovariateMatrix cx(x);
        const NigPrior pr = prior_or_flat(prior, cx.p());
        return risk_direct(pr, cx, Allocation(w), resolve_e(pr, e_sigma2));
      },
      py::arg("x"), py::arg("w"), py::arg("prior") = py::none(), py::arg("e_sigma2") = py::none());

  m.def("mahalanobis",
        [](const MatrixXd& x, const std::vector<std::uint8_t>& w) {
          return mahalanobis(CovariateMatrix(x), Allocation(w));
        },
        py::arg("x"), py::arg("w"));

  m.def(
      "optimize",
      [](const MatrixXd& x, const py::object& prior, const std::string& mode, const py::object& sizes,
         std::uint64_t seed, std::size_t restarts, std::size_t k, std::size_t exhaustive_limit,
         bool trace, std::optional<double> e_sigma2) {
        const CovariateMatrix cx(x);
        const NigPrior pr = prior_or_flat(prior, cx.p());
        const OptimizerConfig cfg = config_from(mode, sizes, seed, restarts, k, exhaustive_limit, trace);
        return to_py(io::to_json(optimize(pr, cx, cfg, resolve_e(pr, e_sigma2))));
      },
      py::arg("x"), py::arg("prior") = py::none(), py::arg("mode") = "exhaustive",
      py::arg("sizes") = py::none(), py::arg("seed") = 0, py::arg("restarts") = 20,
      py::arg("k") = 1000, py::arg("exhaustive_limit") = 22, py::arg("trace") = false,
      py::arg("e_sigma2") = py::none());

  m.def(
      "equal_split_condition",
      [](const MatrixXd& x, bool run_optimizer, std::size_t exhaustive_limit, std::uint64_t seed) {
        EqualSplitOptions opts;
        opts.run_optimizer = run_optimizer;
        opts.exhaustive_limit = exhaustive_limit;
        opts.rng_seed = seed;
        return to_py(io::to_json(equal_split_condition(CovariateMatrix(x), opts)));
      },
      py::arg("x"), py::arg("run_optimizer") = false, py::arg("exhaustive_limit") = 22,
      py::arg("seed") = 0);

  m.def(
      "selftest",
      [](std::uint64_t seed, std::size_t instances) {
        SelftestOptions opts;
        opts.seed = seed;
        opts.instances = instances;
        return to_py(to_json(run_selftest(opts)));
      },
      py::arg("seed") = 0, py::arg("instances") = 40);

  py::class_<PySession>(m, "Session")
      .def(py::init<const py::object&, std::size_t>(), py::arg("prior"), py::arg("p"))
      .def("allocate", &PySession::allocate, py::arg("u"), py::arg("quota") = py::none(),
           py::arg("mode") = "exhaustive", py::arg("seed") = 0, py::arg("restarts") = 20)
      .def("record", &PySession::record, py::arg("batch_index"), py::arg("y"))
      .def_property_readonly("l_c", [](const PySession& s) { return s.state().l_c(); })
      .def_property_readonly("l_t", [](const PySession& s) { return s.state().l_t(); })
      .def_property_readonly("a", [](const PySession& s) { return s.state().a(); })
      .def_property_readonly("b", [](const PySession& s) { return s.state().b(); })
      .def_property_readonly("expected_sigma2",
                             [](const PySession& s) { return s.state().expected_sigma2(); })
      .def_property_readonly("gram", [](const PySession& s) { return s.state().totals().gram; })
      .def("to_json", [](const PySession& s) { return to_py(io::session_to_json(s.state())); })
      .def_static("from_json",
                  [](const py::object& doc) { return PySession(io::session_from_json(from_py(doc))); });
}
