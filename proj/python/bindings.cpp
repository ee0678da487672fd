// Python bindings: geometry, refinery, proposals, alignment, evaluation and the
// self-training loop. Point clouds cross the boundary as (N, 4) float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plrefine/alignment.hpp"
#include "plrefine/config.hpp"
#include "plrefine/error.hpp"
#include "plrefine/evaluation.hpp"
#include "plrefine/harness.hpp"
#include "plrefine/proposals.hpp"
#include "plrefine/refinery.hpp"

namespace py = pybind11;
using namespace plr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 4) throw InvalidArgument("points must have shape (N, 4)");
  auto r = a.unchecked<2>();
  std::vector<LidarPoint> pts;
  pts.reserve(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) pts.push_back({r(i, 0), r(i, 1), r(i, 2), r(i, 3)});
  return PointCloud(std::move(pts));
}

Array from_cloud(const PointCloud& c) {
  Array out({static_cast<py::ssize_t>(c.size()), py::ssize_t{4}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto k = static_cast<py::ssize_t>(i);
    w(k, 0) = c[i].x;
    w(k, 1) = c[i].y;
    w(k, 2) = c[i].z;
    w(k, 3) = c[i].intensity;
  }
  return out;
}

IouKind parse_kind(const std::string& kind) {
  if (kind == "3d") return IouKind::ThreeD;
  if (kind == "bev") return IouKind::Bev;
  throw InvalidArgument("kind must be '3d' or 'bev'");
}

std::vector<RoiFeature> to_features(const Array& values, const std::vector<std::string>& categories, Domain d) {
  if (values.ndim() != 2) throw InvalidArgument("features must be a 2-D array");
  if (static_cast<std::size_t>(values.shape(0)) != categories.size())
    throw InvalidArgument("one category per feature row is required");
  auto r = values.unchecked<2>();
  std::vector<RoiFeature> out;
  for (py::ssize_t i = 0; i < r.shape(0); ++i) {
    std::vector<double> v(static_cast<std::size_t>(r.shape(1)));
    for (py::ssize_t j = 0; j < r.shape(1); ++j) v[static_cast<std::size_t>(j)] = r(i, j);
    out.emplace_back(std::move(v), d, parse_category(categories[static_cast<std::size_t>(i)]));
  }
  return out;
}

py::dict epoch_dict(const EpochMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["round"] = m.round;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["mean_iou"] = m.mean_iou;
  d["triplet_loss"] = m.triplet_loss;
  d["ap_3d"] = m.ap_3d;
  d["ap_bev"] = m.ap_bev;
  d["error_scale"] = m.error_scale;
  d["feature_confusion"] = m.feature_confusion;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pseudo-label refinery for LiDAR 3D detection";

  py::class_<Box3D>(m, "Box3D")
      .def(py::init([](std::array<double, 3> c, std::array<double, 3> s, double heading, const std::string& cat) {
             return Box3D({c[0], c[1], c[2]}, {s[0], s[1], s[2]}, heading, parse_category(cat));
           }),
           py::arg("center"), py::arg("size"), py::arg("heading") = 0.0, py::arg("category") = "Car")
      .def_property_readonly("center", [](const Box3D& b) { return std::array{b.center().x, b.center().y, b.center().z}; })
      .def_property_readonly("size",
                             [](const Box3D& b) { return std::array{b.size().length, b.size().width, b.size().height}; })
      .def_property_readonly("heading", &Box3D::heading)
      .def_property_readonly("category", [](const Box3D& b) { return category_name(b.category()); })
      .def_property_readonly("volume", &Box3D::volume)
      .def("__eq__", [](const Box3D& a, const Box3D& b) { return a == b; })
      .def("__repr__", [](const Box3D& b) {
        return "Box3D(" + category_name(b.category()) + ", center=(" + std::to_string(b.center().x) + ", " +
               std::to_string(b.center().y) + ", " + std::to_string(b.center().z) + "))";
      });

  m.def("normalize_heading", &normalize_heading);
  m.def("iou_bev", &iou_bev);
  m.def("iou_3d", &iou_3d);
  m.def(
      "nms",
      [](const std::vector<Box3D>& boxes, const std::vector<double>& scores, double threshold, const std::string& kind) {
        return nms(boxes, scores, threshold, parse_kind(kind));
      },
      py::arg("boxes"), py::arg("scores"), py::arg("threshold"), py::arg("kind") = "3d");
  m.def(
      "points_in_box", [](const Array& pts, const Box3D& b) { return points_in_box(to_cloud(pts), b); },
      py::arg("points"), py::arg("box"));

  m.def(
      "classify_pseudo_box",
      [](double u, double t_neg, double t_pos) {
        switch (classify_pseudo_box(u, ThresholdMargin(t_neg, t_pos))) {
          case BoxClass::Discard: return std::string("discard");
          case BoxClass::HighConfidence: return std::string("high_confidence");
          default: return std::string("unreliable");
        }
      },
      py::arg("confidence"), py::arg("t_neg") = 0.25, py::arg("t_pos") = 0.6);
  m.def(
      "replace_probability",
      [](double u, double t_neg, double t_pos) { return replace_probability(u, ThresholdMargin(t_neg, t_pos)); },
      py::arg("confidence"), py::arg("t_neg") = 0.25, py::arg("t_pos") = 0.6);
  m.def(
      "refine_labels",
      [](const Array& pts, const std::vector<std::pair<Box3D, double>>& labels, double t_neg, double t_pos,
         std::uint64_t seed) {
        std::vector<PseudoLabel> in;
        for (const auto& [b, u] : labels) in.emplace_back(b, u);
        HighConfDatabase db;
        RandomState rng(seed);
        const RefineResult r = refine_labels(to_cloud(pts), in, ThresholdMargin(t_neg, t_pos), db, rng);
        py::list out;
        for (const PseudoLabel& l : r.labels)
          out.append(py::make_tuple(l.box, l.confidence, l.provenance == Provenance::Replaced ? "replaced" : "detector"));
        py::dict stats;
        stats["discarded"] = r.stats.discarded;
        stats["high_confidence"] = r.stats.high_confidence;
        stats["replaced"] = r.stats.replaced;
        stats["point_removed"] = r.stats.point_removed;
        stats["points_removed"] = r.stats.points_removed;
        stats["points_pasted"] = r.stats.points_pasted;
        stats["overlap_warnings"] = r.stats.overlap_warnings;
        return py::make_tuple(from_cloud(r.cloud), out, stats);
      },
      py::arg("points"), py::arg("labels"), py::arg("t_neg") = 0.25, py::arg("t_pos") = 0.6, py::arg("seed") = 0);

  m.def(
      "augment_proposals",
      [](const std::vector<std::pair<Box3D, double>>& props, double t_iou, double lambda) {
        IEConfig cfg;
        cfg.t_iou = t_iou;
        cfg.lambda = lambda;
        std::vector<Proposal> in;
        for (const auto& [b, c] : props) in.emplace_back(b, c);
        if (in.empty()) return py::list();
        py::list out;
        for (const Proposal& p : augment_proposals(in, cfg)) {
          const char* origin = p.origin == ProposalOrigin::Basic          ? "basic"
                               : p.origin == ProposalOrigin::Interpolated ? "interpolated"
                                                                          : "extrapolated";
          out.append(py::make_tuple(p.box, p.confidence, origin));
        }
        return out;
      },
      py::arg("proposals"), py::arg("t_iou") = 0.01, py::arg("lam") = 0.5);

  m.def(
      "triplet_loss",
      [](const Array& s, const std::vector<std::string>& s_cat, const Array& t, const std::vector<std::string>& t_cat,
         double alpha) {
        const TripletLoss l =
            total_triplet_loss(to_features(s, s_cat, Domain::Source), to_features(t, t_cat, Domain::Target), alpha);
        py::dict d;
        d["intra"] = l.intra;
        d["inter"] = l.inter;
        d["total"] = l.total;
        return d;
      },
      py::arg("source"), py::arg("source_categories"), py::arg("target"), py::arg("target_categories"),
      py::arg("alpha") = 1.0);

  m.def(
      "average_precision_r40",
      [](const std::vector<bool>& flags, std::size_t n_gt) { return average_precision_r40(flags, n_gt); },
      py::arg("tp_flags"), py::arg("num_gt"));
  m.def("closed_gap", &closed_gap, py::arg("ap_model"), py::arg("ap_source_only"), py::arg("ap_oracle"));

  m.def(
      "self_train",
      [](const std::string& config_json) {
        const SelfTrainConfig cfg =
            config_from_json(config_json.empty() ? nlohmann::ordered_json::object()
                                                 : nlohmann::ordered_json::parse(config_json));
        SelfTrainResult r;
        {
          py::gil_scoped_release release;
          r = self_train(cfg);
        }
        py::list epochs;
        for (const EpochMetrics& e : r.epochs) epochs.append(epoch_dict(e));
        return epochs;
      },
      py::arg("config_json") = "");
  m.def("default_config_json", [] { return config_to_json(SelfTrainConfig{}).dump(2); });

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<PreconditionViolation>(m, "PreconditionViolation", PyExc_ValueError);
}
