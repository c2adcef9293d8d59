#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "biaug/core.hpp"
#include "biaug/error.hpp"
#include "biaug/eval.hpp"
#include "biaug/filter_stats.hpp"
#include "biaug/fixture.hpp"
#include "biaug/manifest.hpp"
#include "biaug/pipeline.hpp"
#include "biaug/train.hpp"

namespace py = pybind11;
using namespace biaug;

namespace {

py::object to_python(const ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

RetrievalDirection parse_direction(const std::string& s) {
  if (s == "image") return RetrievalDirection::image_retrieval;
  if (s == "text") return RetrievalDirection::text_retrieval;
  throw std::invalid_argument("direction must be 'image' or 'text'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bimodal hard-negative augmentation pipeline";

  auto base = py::register_exception<Error>(m, "BiaugError");
  py::register_exception<MissingInput>(m, "MissingInput", base.ptr());
  py::register_exception<ConfigInvalid>(m, "ConfigInvalid", base.ptr());
  py::register_exception<MalformedRecord>(m, "MalformedRecord", base.ptr());
  py::register_exception<DuplicateId>(m, "DuplicateId", base.ptr());
  py::register_exception<UnparseableCaption>(m, "UnparseableCaption", base.ptr());
  py::register_exception<TooShort>(m, "TooShort", base.ptr());
  py::register_exception<DegenerateBatch>(m, "DegenerateBatch", base.ptr());

  py::class_<BoundingBox>(m, "BoundingBox")
      .def(py::init<std::int32_t, std::int32_t, std::int32_t, std::int32_t>(), py::arg("x"),
           py::arg("y"), py::arg("w"), py::arg("h"))
      .def_property_readonly("x", &BoundingBox::x)
      .def_property_readonly("y", &BoundingBox::y)
      .def_property_readonly("w", &BoundingBox::w)
      .def_property_readonly("h", &BoundingBox::h)
      .def_property_readonly("area", &BoundingBox::area)
      .def("__eq__", [](const BoundingBox& a, const BoundingBox& b) { return a == b; })
      .def("__repr__", [](const BoundingBox& b) {
        return "BoundingBox(" + std::to_string(b.x()) + ", " + std::to_string(b.y()) + ", " +
               std::to_string(b.w()) + ", " + std::to_string(b.h()) + ")";
      });

  py::class_<DetectedObject>(m, "DetectedObject")
      .def(py::init([](std::string source_id, std::string name, BoundingBox box, double conf) {
             return DetectedObject{std::move(source_id), std::move(name), box, conf};
           }),
           py::arg("source_id"), py::arg("name"), py::arg("box"), py::arg("confidence"))
      .def_readwrite("source_id", &DetectedObject::source_id)
      .def_readwrite("name", &DetectedObject::name)
      .def_readwrite("box", &DetectedObject::box)
      .def_readwrite("confidence", &DetectedObject::confidence)
      .def("__repr__", [](const DetectedObject& o) {
        return "DetectedObject(" + o.source_id + ", " + o.name + ", " +
               std::to_string(o.confidence) + ")";
      });

  m.def("intersection_area", &intersection_area, py::arg("a"), py::arg("b"));
  m.def("area_overlap_filter", &area_overlap_filter, py::arg("objects"),
        py::arg("threshold") = 0.7);
  m.def("confidence_filter", &confidence_filter, py::arg("objects"), py::arg("threshold") = 0.9);

  m.def(
      "contrastive_loss",
      [](const Eigen::MatrixXd& text, const Eigen::MatrixXd& image, double temperature) {
        if (text.rows() != image.rows() || text.cols() != image.cols()) {
          throw std::invalid_argument("text and image must have the same shape");
        }
        Batch b;
        for (Eigen::Index i = 0; i < text.rows(); ++i) {
          b.items.push_back({text.row(i).transpose(), image.row(i).transpose(),
                             std::to_string(i), ""});
        }
        return contrastive_loss(b, temperature);
      },
      py::arg("text"), py::arg("image"), py::arg("temperature") = 0.07,
      "Symmetric InfoNCE over unit-norm rows.");
  m.def(
      "contrastive_loss_with_grad",
      [](const Eigen::MatrixXd& text, const Eigen::MatrixXd& image, double temperature) {
        auto g = contrastive_loss_with_grad(text, image, temperature);
        return py::make_tuple(g.loss, g.d_text, g.d_image);
      },
      py::arg("text"), py::arg("image"), py::arg("temperature") = 0.07);
  m.def("scale_baseline_epochs", &scale_baseline_epochs, py::arg("augmented_size"),
        py::arg("source_size"), py::arg("epochs"));

  m.def(
      "recall_at_k",
      [](const Eigen::MatrixXd& similarity, std::vector<std::vector<std::size_t>> gold,
         std::size_t k, const std::string& direction) {
        GoldMapping g{std::move(gold), static_cast<std::size_t>(similarity.cols())};
        return recall_at_k(similarity, g, k, parse_direction(direction));
      },
      py::arg("similarity"), py::arg("gold"), py::arg("k"), py::arg("direction") = "image",
      "similarity is captions x images; gold[c] lists caption c's images.");
  m.def("make_attribute_swap_negative", &make_attribute_swap_negative, py::arg("caption"));
  m.def(
      "make_order_negative",
      [](const std::string& caption, const std::string& mode, std::uint64_t seed) {
        const auto parsed = parse_order_mode(mode);
        if (!parsed) throw std::invalid_argument("unknown order mode '" + mode + "'");
        return make_order_negative(caption, *parsed, seed);
      },
      py::arg("caption"), py::arg("mode"), py::arg("seed") = 0);

  m.def(
      "compute_stats_from_ledger",
      [](const fs::path& path) { return to_python(compute_stats_from_ledger(path).to_json()); },
      py::arg("path"));
  m.def(
      "validate_manifest",
      [](const fs::path& path, const std::string& kind) {
        const auto parsed = parse_manifest_kind(kind);
        if (!parsed) throw std::invalid_argument("unknown manifest kind '" + kind + "'");
        return validate_manifest_file(path, *parsed);
      },
      py::arg("path"), py::arg("kind"));

  m.def(
      "make_mock_fixture",
      [](const fs::path& dir, std::size_t count, std::uint64_t seed) {
        FixtureOptions o;
        o.count = count;
        o.seed = seed;
        return make_mock_fixture(dir, o);
      },
      py::arg("dir"), py::arg("count") = 40, py::arg("seed") = 7,
      "Writes the mock fixture and returns its config path.");
  m.def(
      "run_all",
      [](const fs::path& config_path) {
        auto config = PipelineConfig::load(config_path);
        config.apply_environment();
        config.validate();
        std::vector<RunReport> reports;
        {
          py::gil_scoped_release release;
          reports = cmd_run_all(config);
        }
        py::list out;
        for (const auto& r : reports) out.append(to_python(r.to_json()));
        return out;
      },
      py::arg("config_path"), "Runs every stage; returns the run reports.");
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Command-line entry point; returns the exit code.");
}
