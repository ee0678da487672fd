#include "plrefine/config.hpp"

#include <fstream>
#include <set>

#include "plrefine/error.hpp"

namespace plr {
namespace {

using json = nlohmann::ordered_json;

constexpr std::array<const char*, 3> kSlotKeys{"car", "pedestrian", "cyclist"};

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw FormatError("config: " + label() + " must be an object");
  }

  void read(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }

  template <class Fn>
  void nested(const char* key, Fn&& fn) {
    if (const json* v = take(key)) {
      Reader inner(*v, where_.empty() ? key : where_ + "." + key);
      fn(inner);
      inner.finish();
    }
  }

  void skip(const char* key) { take(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw FormatError("config: unknown key '" + item.key() + "' in " + label());
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw FormatError("config: '" + std::string(key) + "' in " + label() + " must be " + what);
  }

  std::string label() const { return where_.empty() ? "top level" : where_; }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json scene_to_json(const SceneConfig& s) {
  json instances = json::object();
  json points = json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    instances[kSlotKeys[k]] = s.instances[k];
    points[kSlotKeys[k]] = {{"mean", s.points[k].mean}, {"stddev", s.points[k].stddev}};
  }
  return {{"instances", instances},
          {"points", points},
          {"extent", s.extent},
          {"min_range", s.min_range},
          {"clutter_points", s.clutter_points},
          {"elevated_clutter_fraction", s.elevated_clutter_fraction},
          {"facing_bias", s.facing_bias},
          {"max_placement_attempts", s.max_placement_attempts},
          {"seed", s.seed}};
}

void read_scene(Reader& r, SceneConfig& s) {
  r.nested("instances", [&](Reader& in) {
    for (std::size_t k = 0; k < 3; ++k) in.read(kSlotKeys[k], s.instances[k]);
  });
  r.nested("points", [&](Reader& in) {
    for (std::size_t k = 0; k < 3; ++k) {
      in.nested(kSlotKeys[k], [&](Reader& p) {
        p.read("mean", s.points[k].mean);
        p.read("stddev", s.points[k].stddev);
      });
    }
  });
  r.read("extent", s.extent);
  r.read("min_range", s.min_range);
  r.read("clutter_points", s.clutter_points);
  r.read("elevated_clutter_fraction", s.elevated_clutter_fraction);
  r.read("facing_bias", s.facing_bias);
  r.read("max_placement_attempts", s.max_placement_attempts);
  std::size_t seed = s.seed;
  r.read("seed", seed);
  s.seed = seed;
}

}  // namespace

json config_to_json(const SelfTrainConfig& c) {
  const OracleConfig& o = c.oracle;
  const FeatureModelConfig& f = c.features;
  return {{"seed", c.seed},
          {"frames_per_domain", c.frames_per_domain},
          {"epochs", c.epochs},
          {"update_period", c.update_period},
          {"t_neg", c.t_neg},
          {"t_pos", c.t_pos},
          {"ie", {{"t_iou", c.ie.t_iou}, {"lambda", c.ie.lambda}, {"nms_split_threshold", c.ie.nms_split_threshold}}},
          {"triplet", {{"alpha", c.triplet.alpha}, {"eta", c.triplet.eta}}},
          {"toggles",
           {{"complementary_augmentation", c.toggles.complementary_augmentation},
            {"interpolation_extrapolation", c.toggles.interpolation_extrapolation},
            {"alignment", c.toggles.alignment}}},
          {"final_nms_threshold", c.final_nms_threshold},
          {"rescore_noise", c.rescore_noise},
          {"attenuation_rate", c.attenuation_rate},
          {"min_error_scale", c.min_error_scale},
          {"source_scene", scene_to_json(c.source_scene)},
          {"target_scene", scene_to_json(c.target_scene)},
          {"oracle",
           {{"center_noise", o.center_noise},
            {"size_noise", o.size_noise},
            {"heading_noise", o.heading_noise},
            {"confidence_noise", o.confidence_noise},
            {"false_positive_rate", o.false_positive_rate},
            {"miss_rate", o.miss_rate},
            {"point_bias", o.point_bias},
            {"proposals_per_object", o.proposals_per_object},
            {"min_points", o.min_points}}},
          {"features",
           {{"dimension", f.dimension},
            {"batch_per_domain", f.batch_per_domain},
            {"class_separation", f.class_separation},
            {"spread", f.spread},
            {"entanglement", f.entanglement},
            {"domain_shift", f.domain_shift},
            {"align_rate", f.align_rate},
            {"confusion_gain", f.confusion_gain},
            {"confusion_samples", f.confusion_samples}}}};
}

SelfTrainConfig config_from_json(const json& j) {
  SelfTrainConfig c;
  Reader r(j, "");
  std::size_t seed = c.seed;
  r.read("seed", seed);
  c.seed = seed;
  r.read("frames_per_domain", c.frames_per_domain);
  r.read("epochs", c.epochs);
  r.read("update_period", c.update_period);
  r.read("t_neg", c.t_neg);
  r.read("t_pos", c.t_pos);
  r.nested("ie", [&](Reader& in) {
    in.read("t_iou", c.ie.t_iou);
    in.read("lambda", c.ie.lambda);
    in.read("nms_split_threshold", c.ie.nms_split_threshold);
  });
  r.nested("triplet", [&](Reader& in) {
    in.read("alpha", c.triplet.alpha);
    in.read("eta", c.triplet.eta);
  });
  r.nested("toggles", [&](Reader& in) {
    in.read("complementary_augmentation", c.toggles.complementary_augmentation);
    in.read("interpolation_extrapolation", c.toggles.interpolation_extrapolation);
    in.read("alignment", c.toggles.alignment);
  });
  r.read("final_nms_threshold", c.final_nms_threshold);
  r.read("rescore_noise", c.rescore_noise);
  r.read("attenuation_rate", c.attenuation_rate);
  r.read("min_error_scale", c.min_error_scale);
  r.nested("source_scene", [&](Reader& in) { read_scene(in, c.source_scene); });
  r.nested("target_scene", [&](Reader& in) { read_scene(in, c.target_scene); });
  r.nested("oracle", [&](Reader& in) {
    OracleConfig& o = c.oracle;
    in.read("center_noise", o.center_noise);
    in.read("size_noise", o.size_noise);
    in.read("heading_noise", o.heading_noise);
    in.read("confidence_noise", o.confidence_noise);
    in.read("false_positive_rate", o.false_positive_rate);
    in.read("miss_rate", o.miss_rate);
    in.read("point_bias", o.point_bias);
    in.read("proposals_per_object", o.proposals_per_object);
    in.read("min_points", o.min_points);
  });
  r.nested("features", [&](Reader& in) {
    FeatureModelConfig& f = c.features;
    in.read("dimension", f.dimension);
    in.read("batch_per_domain", f.batch_per_domain);
    in.read("class_separation", f.class_separation);
    in.read("spread", f.spread);
    in.read("entanglement", f.entanglement);
    in.read("domain_shift", f.domain_shift);
    in.read("align_rate", f.align_rate);
    in.read("confusion_gain", f.confusion_gain);
    in.read("confusion_samples", f.confusion_samples);
  });
  r.skip("run");
  r.finish();
  c.validate();
  return c;
}

SelfTrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void store_manifest(const std::filesystem::path& path, const SelfTrainConfig& cfg, const json& run) {
  json j = config_to_json(cfg);
  j["run"] = run;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace plr
