#include <memory>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdmis/errors.hpp"
#include "pdmis/estimator.hpp"
#include "pdmis/harness.hpp"
#include "pdmis/partition.hpp"

namespace py = pybind11;
using namespace pdmis;

namespace {

// Python callables are held through a shared_ptr whose deleter takes the GIL,
// so worker threads can copy the wrapping std::function freely.
std::shared_ptr<py::function> hold(py::function fn) {
  return std::shared_ptr<py::function>(new py::function(std::move(fn)), [](py::function* p) {
    py::gil_scoped_acquire gil;
    delete p;
  });
}

std::vector<Point> rows_to_points(const Eigen::MatrixXd& m) {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).transpose());
  return out;
}

Eigen::MatrixXd points_to_rows(const std::vector<Point>& xs) {
  if (xs.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), xs.front().size());
  for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return m;
}

MomentFn to_moment(const py::object& f) {
  if (f.is_none()) return identity_moment();
  if (py::isinstance<py::str>(f)) {
    const auto name = f.cast<std::string>();
    if (name == "identity") return identity_moment();
    if (name == "constant") return constant_moment();
    throw py::value_error("moment must be 'identity', 'constant' or a callable");
  }
  auto fn = hold(f.cast<py::function>());
  return [fn](const Point& x) {
    py::gil_scoped_acquire gil;
    return (*fn)(x).cast<Eigen::VectorXd>();
  };
}

}  // namespace

PYBIND11_MODULE(_pdmis, m) {
  m.doc() = "Partial deterministic-mixture multiple importance sampling";

  // Translators run newest first, so the subclasses registered after the base
  // map to their own Python types.
  const auto base = py::register_exception<Error>(m, "PdmisError", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base);
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base);
  py::register_exception<NonFiniteDensity>(m, "NonFiniteDensity", base);
  py::register_exception<InvalidSize>(m, "InvalidSize", base);
  py::register_exception<NotAPartition>(m, "NotAPartition", base);
  py::register_exception<NonFiniteWeight>(m, "NonFiniteWeight", base);
  py::register_exception<AllWeightsZero>(m, "AllWeightsZero", base);
  py::register_exception<ScheduleInvalid>(m, "ScheduleInvalid", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<InvalidConfig>(m, "InvalidConfig", base);
  py::register_exception<IoError>(m, "IoError", base);

  py::class_<Gaussian>(m, "Gaussian")
      .def(py::init<Point, Matrix>(), py::arg("mean"), py::arg("cov"))
      .def_property_readonly("dim", &Gaussian::dim)
      .def_property_readonly("mean", &Gaussian::mean)
      .def_property_readonly("cov", &Gaussian::cov)
      .def("logpdf", &Gaussian::logpdf, py::arg("x"))
      .def("sample", [](const Gaussian& g, std::uint64_t seed) {
        RandomStream rng(seed);
        return g.sample(rng);
      }, py::arg("seed"));

  py::class_<Mixture>(m, "Mixture")
      .def(py::init<std::vector<Gaussian>>(), py::arg("components"))
      .def("__len__", &Mixture::size)
      .def_property_readonly("dim", &Mixture::dim)
      .def_property_readonly("components", &Mixture::components)
      .def("logpdf", &Mixture::logpdf, py::arg("x"))
      .def("mean", &Mixture::mean)
      .def("covariance", &Mixture::covariance)
      .def("sample_random", [](const Mixture& mix, std::size_t count, std::uint64_t seed) {
        RandomStream rng(seed);
        return points_to_rows(mix.sample_random(count, rng));
      }, py::arg("count"), py::arg("seed"))
      .def("sample_deterministic", [](const Mixture& mix, std::uint64_t seed) {
        RandomStream rng(seed);
        return points_to_rows(mix.sample_deterministic(rng));
      }, py::arg("seed"));

  m.def("reference_mixture", &reference_mixture);
  m.def("reference_mean", &reference_mean);

  py::class_<TargetDensity>(m, "Target")
      .def(py::init([](std::size_t dim, py::function log_density) {
             auto fn = hold(std::move(log_density));
             return TargetDensity(dim, [fn](const Point& x) {
               py::gil_scoped_acquire gil;
               return (*fn)(x).cast<double>();
             });
           }),
           py::arg("dim"), py::arg("log_density"))
      .def_static("from_mixture", &TargetDensity::from_mixture, py::arg("mixture"))
      .def_static("from_gaussian", &TargetDensity::from_gaussian, py::arg("gaussian"))
      .def_property_readonly("dim", &TargetDensity::dim)
      .def("logpdf", &TargetDensity::logpdf, py::arg("x"))
      .def_property_readonly("eval_count", &TargetDensity::eval_count)
      .def("reset_count", &TargetDensity::reset_count);

  py::class_<Partition>(m, "Partition")
      .def(py::init(&Partition::from_subsets), py::arg("subsets"), py::arg("n_total"))
      .def_property_readonly("n_total", &Partition::n_total)
      .def_property_readonly("num_subsets", &Partition::num_subsets)
      .def_property_readonly("subsets", &Partition::subsets)
      .def("group_of", &Partition::group_of, py::arg("i"))
      .def_property_readonly("eval_cost", &Partition::eval_cost)
      .def(py::self == py::self)
      .def("__str__", [](const Partition& p) { return to_string(p); })
      .def("__repr__", [](const Partition& p) { return "Partition(" + to_string(p) + ")"; });

  m.def("partition_singleton", &partition_singleton, py::arg("n"));
  m.def("partition_full", &partition_full, py::arg("n"));
  m.def("partition_random_blocks", [](std::size_t n, std::size_t p, std::uint64_t seed) {
    RandomStream rng(seed);
    return partition_random_blocks(n, p, rng);
  }, py::arg("n"), py::arg("p"), py::arg("seed"));
  m.def("partition_contiguous_blocks", &partition_contiguous_blocks, py::arg("n"), py::arg("p"));
  m.def("partition_grid_spatial", &partition_grid_spatial, py::arg("j"), py::arg("t"));
  m.def("partition_grid_temporal", &partition_grid_temporal, py::arg("j"), py::arg("t"));
  m.def("parse_partition", &parse_partition, py::arg("text"), py::arg("n_total"));

  py::class_<WeightedSamples>(m, "WeightedSamples")
      .def_property_readonly("samples", [](const WeightedSamples& w) { return points_to_rows(w.samples); })
      .def_readonly("log_weights", &WeightedSamples::log_weights)
      .def_readonly("partition", &WeightedSamples::partition)
      .def_readonly("proposal_evals", &WeightedSamples::proposal_evals)
      .def_readonly("target_evals", &WeightedSamples::target_evals)
      .def("__len__", &WeightedSamples::size);

  py::class_<EstimateResult>(m, "EstimateResult")
      .def_readonly("moment", &EstimateResult::moment)
      .def_readonly("z_hat", &EstimateResult::z_hat)
      .def_readonly("proposal_evals", &EstimateResult::proposal_evals)
      .def_readonly("target_evals", &EstimateResult::target_evals);

  m.def("draw_samples", [](const std::vector<Gaussian>& proposals, std::uint64_t seed) {
    RandomStream rng(seed);
    return points_to_rows(draw_samples(proposals, rng));
  }, py::arg("proposals"), py::arg("seed"));

  m.def("compute_weights",
        [](const TargetDensity& target, const std::vector<Gaussian>& proposals,
           const Partition& partition, const Eigen::MatrixXd& samples, unsigned workers) {
          auto xs = rows_to_points(samples);
          py::gil_scoped_release release;
          return compute_weights(target, proposals, partition, std::move(xs), workers);
        },
        py::arg("target"), py::arg("proposals"), py::arg("partition"), py::arg("samples"),
        py::arg("workers") = 1);

  m.def("estimate_moment", [](const WeightedSamples& ws, const py::object& f) {
    const MomentFn fn = to_moment(f);
    py::gil_scoped_release release;
    return estimate_moment(ws, fn);
  }, py::arg("weighted"), py::arg("f") = py::none());

  m.def("estimate_unnormalized", [](const WeightedSamples& ws, const py::object& f) {
    const MomentFn fn = to_moment(f);
    py::gil_scoped_release release;
    return estimate_unnormalized(ws, fn);
  }, py::arg("weighted"), py::arg("f") = py::none());

  m.def("proposal_eval_cost", &proposal_eval_cost, py::arg("partition"));

  py::class_<SelectionStep>(m, "SelectionStep")
      .def_readonly("num_mixtures", &SelectionStep::num_mixtures)
      .def_readonly("partition", &SelectionStep::partition)
      .def_readonly("estimate", &SelectionStep::estimate)
      .def_readonly("change", &SelectionStep::change)
      .def_readonly("new_evals", &SelectionStep::new_evals);

  py::class_<SelectionResult>(m, "SelectionResult")
      .def_readonly("partition", &SelectionResult::partition)
      .def_readonly("trace", &SelectionResult::trace)
      .def_readonly("distinct_evals", &SelectionResult::distinct_evals)
      .def_readonly("target_evals", &SelectionResult::target_evals)
      .def_readonly("converged", &SelectionResult::converged);

  m.def("select_num_mixtures",
        [](const TargetDensity& target, const std::vector<Gaussian>& proposals,
           const Eigen::MatrixXd& samples, const std::vector<std::size_t>& schedule,
           double threshold, std::uint64_t seed, const py::object& f) {
          const auto xs = rows_to_points(samples);
          const MomentFn fn = to_moment(f);
          py::gil_scoped_release release;
          RandomStream rng(seed);
          return select_num_mixtures(target, proposals, xs, fn, schedule, threshold, rng);
        },
        py::arg("target"), py::arg("proposals"), py::arg("samples"), py::arg("schedule"),
        py::arg("threshold"), py::arg("seed"), py::arg("f") = py::none());

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("n_proposals", &ExperimentConfig::n_proposals)
      .def_readwrite("sigma", &ExperimentConfig::sigma)
      .def_readwrite("box_lo", &ExperimentConfig::box_lo)
      .def_readwrite("box_hi", &ExperimentConfig::box_hi)
      .def_readwrite("p_values", &ExperimentConfig::p_values)
      .def_readwrite("n_runs", &ExperimentConfig::n_runs)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("dim", &ExperimentConfig::dim)
      .def_readwrite("fixed_means", &ExperimentConfig::fixed_means)
      .def_readwrite("workers", &ExperimentConfig::workers)
      .def_readwrite("threshold", &ExperimentConfig::threshold)
      .def("resolved_p_values", &ExperimentConfig::resolved_p_values);

  m.def("load_config", &load_config, py::arg("file_settings"), py::arg("flag_settings"));
  m.def("validate_config", &validate_config, py::arg("config"));

  py::class_<ResultRow>(m, "ResultRow")
      .def_readonly("p", &ResultRow::p)
      .def_readonly("m_nominal", &ResultRow::m_nominal)
      .def_readonly("mse_mean", &ResultRow::mse_mean)
      .def_readonly("mse_z", &ResultRow::mse_z)
      .def_readonly("evals", &ResultRow::evals);

  m.def("run_experiment", [](const ExperimentConfig& cfg) {
    py::gil_scoped_release release;
    return run_experiment(cfg).rows;
  }, py::arg("config"));
  m.def("format_csv", &format_csv, py::arg("rows"));
}
