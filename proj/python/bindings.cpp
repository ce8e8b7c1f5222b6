#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dat/energy.hpp"
#include "dat/experiment.hpp"

namespace py = pybind11;
using namespace dat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Leading axis is the batch; the rest must hold one model input.
Tensor to_tensor(const Array& a, const Shape& sample) {
  if (a.ndim() < 1) throw DomainError("expected an array with a batch axis");
  const auto n = static_cast<std::size_t>(a.shape(0));
  if (static_cast<std::size_t>(a.size()) != n * shape_numel(sample)) {
    throw DomainError("array does not hold samples of shape " + shape_string(sample));
  }
  Shape shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Network load_model(const std::filesystem::path& checkpoint, const std::string& weights) {
  const TrainState s = load_checkpoint(checkpoint);
  Network m = weights == "ema" && !s.ema.values().empty() ? with_parameters(s.model, s.ema.values()) : s.model;
  m.require_norm_mode(std::nullopt);
  m.set_norm_mode(NormMode::FrozenStats);
  return m;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["step"] = r.step;
  d["metric"] = r.metric;
  d["value"] = r.value;
  d["embedder"] = r.embedder;
  d["attack_hash"] = r.attack_hash;
  d["n_samples"] = r.n_samples;
  d["seed"] = r.seed;
  return d;
}

py::object info_dict(const std::optional<CheckpointInfo>& c) {
  if (!c) return py::none();
  py::dict d;
  d["step"] = c->step;
  d["path"] = c->path;
  d["metrics"] = c->metrics;
  return std::move(d);
}

ExperimentConfig config_from(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = load_config(path);
  apply_overrides(cfg, overrides);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual adversarial training core";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);
  py::register_exception<TrainingDivergence>(m, "TrainingDivergence", PyExc_RuntimeError);

  m.def("logsumexp", [](const Matrix& l) { return Vector(logsumexp_rows(l)); }, py::arg("logits"));
  m.def("marginal_energy", [](const Matrix& l) { return Vector(marginal_energy(l)); }, py::arg("logits"));
  m.def("joint_energy", [](const Matrix& l, const Labels& y) { return Vector(joint_energy(l, y)); },
        py::arg("logits"), py::arg("labels"));
  m.def("conditional_probs", &conditional_probs, py::arg("logits"));

  m.def("fid", [](const Matrix& a, const Matrix& b) { return fid(summarize(a), summarize(b)); },
        py::arg("features_a"), py::arg("features_b"), "Frechet distance between Gaussian fits of two feature sets.");
  m.def("inception_score", &inception_score, py::arg("probs"));
  m.def("ood_auroc",
        [](const std::vector<double>& id, const std::vector<double>& ood) { return ood_auroc(id, ood); },
        py::arg("scores_id"), py::arg("scores_ood"));
  m.def("ece", [](const Matrix& p, const Labels& y, int bins) { return ece(p, y, bins).ece; }, py::arg("probs"),
        py::arg("labels"), py::arg("bins") = 10);

  py::class_<Network>(m, "Network")
      .def_property_readonly("num_classes", &Network::num_classes)
      .def_property_readonly("input_shape", [](const Network& n) { return n.input_shape(); })
      .def_property_readonly("num_parameters", [](const Network& n) { return n.parameters().size(); })
      .def("logits", [](const Network& n, const Array& x) { return logits(n, to_tensor(x, n.input_shape())); },
           py::arg("x"))
      .def("energy",
           [](const Network& n, const Array& x) {
             return Vector(marginal_energy(logits(n, to_tensor(x, n.input_shape()))));
           },
           py::arg("x"))
      .def("attack",
           [](const Network& n, const Array& x, const Labels& y, double eps, int steps, double step_size,
              bool clamp01) {
             AttackSpec s;
             s.eps = eps;
             s.steps = steps;
             s.step_size = step_size;
             s.clamp01 = clamp01;
             s.keep_best = true;
             return to_array(pgd_classification_attack(n, to_tensor(x, n.input_shape()), y, s).final);
           },
           py::arg("x"), py::arg("labels"), py::arg("eps"), py::arg("steps") = 10, py::arg("step_size") = 0.1,
           py::arg("clamp01") = false, "L2 PGD on the cross-entropy; returns the perturbed batch.")
      .def("sample",
           [](const Network& n, const Array& x0, const std::optional<Labels>& y, int steps, double step_size,
              bool clamp01) {
             AttackSpec s;
             s.steps = steps;
             s.step_size = step_size;
             s.clamp01 = clamp01;
             s.objective = y ? AttackObjective::NegJointEnergy : AttackObjective::NegMarginalEnergy;
             const Tensor x = to_tensor(x0, n.input_shape());
             return to_array(y ? pgd_energy_sample(n, x, s, *y).final : pgd_energy_sample(n, x, s).final);
           },
           py::arg("x0"), py::arg("labels") = py::none(), py::arg("steps") = 20, py::arg("step_size") = 0.1,
           py::arg("clamp01") = false,
           "Energy descent from x0; joint energy when labels are given, marginal otherwise.");

  m.def("load_model", &load_model, py::arg("checkpoint"), py::arg("weights") = "ema");

  m.def("load_dataset",
        [](const std::string& name, const std::string& split, std::size_t size, std::uint64_t seed) {
          const DatasetHandle d = load_dataset({name, split, size, seed});
          return py::make_tuple(to_array(d.samples), d.labels);
        },
        py::arg("name"), py::arg("split") = "train", py::arg("size") = 0, py::arg("seed") = 0);

  m.def("config_text",
        [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
          return to_text(config_from(path, overrides));
        },
        py::arg("config"), py::arg("overrides") = std::vector<std::string>{});

  m.def("train",
        [](const std::filesystem::path& config, const std::filesystem::path& run_dir,
           const std::vector<std::string>& overrides) {
          const ExperimentConfig cfg = config_from(config, overrides);
          TrainSummary s;
          {
            py::gil_scoped_release release;
            s = run_training(cfg, run_dir);
          }
          py::dict d;
          d["run_dir"] = s.run_dir;
          d["stage1"] = info_dict(s.stage1);
          d["stage2"] = info_dict(s.stage2);
          return d;
        },
        py::arg("config"), py::arg("run_dir"), py::arg("overrides") = std::vector<std::string>{});

  m.def("evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& config,
           const std::set<std::string>& groups, const std::filesystem::path& out_dir,
           const std::vector<std::string>& overrides) {
          const ExperimentConfig cfg = config_from(config, overrides);
          EvalOutput out;
          {
            py::gil_scoped_release release;
            out = run_evaluation(checkpoint, cfg, groups, out_dir);
          }
          py::list rows;
          for (const auto& r : out.reports) rows.append(report_dict(r));
          return rows;
        },
        py::arg("checkpoint"), py::arg("config"), py::arg("groups"), py::arg("out_dir"),
        py::arg("overrides") = std::vector<std::string>{});

  m.def("verify",
        [](const std::filesystem::path& out_dir, std::uint64_t seed) {
          py::list rows;
          for (const auto& c : run_verification(out_dir, seed)) rows.append(py::make_tuple(c.name, c.passed, c.detail));
          return rows;
        },
        py::arg("out_dir"), py::arg("seed") = 0);
}
