#include "plrefine/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "plrefine/error.hpp"
#include "plrefine/evaluation.hpp"
#include "plrefine/text.hpp"

namespace plr {
namespace {

// Stream tags for RandomState::derive.
enum StreamTag : std::uint64_t {
  kSourceScene = 101,
  kTargetScene,
  kOracle,
  kRescore,
  kRefine,
  kFeatures,
  kConfusion,
};

constexpr Vec3 kSensor{0.0, 0.0, 1.7};

Size3 jittered_size(Category c, RandomState& rng) {
  const Size3 p = size_prior(c);
  const auto jitter = [&](double v) { return std::max(0.2 * v, v * (1.0 + 0.05 * rng.normal())); };
  const double l = jitter(p.length);
  const double w = jitter(p.width);
  const double h = jitter(p.height);
  return {l, w, h};
}

bool inside_any(std::span<const Box3D> boxes, const Vec3& p) {
  return std::any_of(boxes.begin(), boxes.end(), [&](const Box3D& b) { return contains(b, p); });
}

void check_rate(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0, 1]");
}

void check_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be finite and >= 0");
}

struct ObjectCue {
  std::size_t points = 0;
  Vec3 offset;  // density_offset
};

std::vector<ObjectCue> object_cues(const PointCloud& cloud, std::span<const Box3D> objects) {
  std::vector<ObjectCue> cues;
  cues.reserve(objects.size());
  for (const Box3D& o : objects) {
    const auto idx = points_in_box(cloud, o);
    ObjectCue cue{idx.size(), {}};
    if (!idx.empty()) {
      double sx = 0.0;
      double sy = 0.0;
      for (std::size_t i : idx) {
        sx += cloud[i].x;
        sy += cloud[i].y;
      }
      const double n = static_cast<double>(idx.size());
      cue.offset = {sx / n - o.center().x, sy / n - o.center().y, 0.0};
    }
    cues.push_back(cue);
  }
  return cues;
}

std::vector<Proposal> run_oracle(const PointCloud& cloud, std::span<const Box3D> objects,
                                 std::span<const ObjectCue> cues, const OracleConfig& cfg, RandomState& rng,
                                 double scale) {
  std::vector<Proposal> out;
  out.reserve(objects.size() * cfg.proposals_per_object + 4);
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const Box3D& obj = objects[o];
    const bool detectable = cues[o].points >= cfg.min_points && rng.uniform() >= cfg.miss_rate * scale;
    for (std::size_t k = 0; k < cfg.proposals_per_object; ++k) {
      // fixed draw count per proposal, used or not
      const double nx = rng.normal();
      const double ny = rng.normal();
      const double nl = rng.normal();
      const double nw = rng.normal();
      const double nh = rng.normal();
      const double nt = rng.normal();
      const double bias = rng.uniform(0.0, 2.0);
      const double nc = rng.normal();
      if (!detectable) continue;
      const Vec3 drift = cfg.point_bias * bias * cues[o].offset;
      const Vec3 center = obj.center() + scale * (Vec3{cfg.center_noise * nx, cfg.center_noise * ny, 0.0} + drift);
      const Size3& s = obj.size();
      const auto perturb = [&](double v, double n) { return std::max(0.2 * v, v * (1.0 + scale * cfg.size_noise * n)); };
      const Box3D box(center, {perturb(s.length, nl), perturb(s.width, nw), perturb(s.height, nh)},
                      obj.heading() + scale * cfg.heading_noise * nt, obj.category());
      const double conf = std::clamp(iou_3d(box, obj) + scale * cfg.confidence_noise * nc, 0.0, 1.0);
      out.emplace_back(box, conf);
    }
  }
  const std::uint32_t fp = rng.poisson(cfg.false_positive_rate * scale * static_cast<double>(objects.size()));
  for (std::uint32_t k = 0; k < fp && !cloud.empty(); ++k) {
    const LidarPoint& anchor = cloud[rng.index(cloud.size())];
    const Category cat = kKnownCategories[rng.index(kKnownCategories.size())];
    const Size3 size = jittered_size(cat, rng);
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double conf = rng.uniform(0.0, 0.5);
    out.emplace_back(Box3D({anchor.x, anchor.y, 0.5 * size.height}, size, heading, cat), conf);
  }
  return out;
}

// Greedy one-to-one matching within a frame with the per-category thresholds.
struct FrameMatch {
  std::vector<bool> label_tp;
  std::vector<bool> gt_matched;
  std::vector<double> label_iou;  // best same-category IoU, matched or not
};

FrameMatch match_frame(std::span<const Box3D> boxes, std::span<const double> scores, std::span<const Box3D> gts) {
  FrameMatch m{std::vector<bool>(boxes.size(), false), std::vector<bool>(gts.size(), false),
               std::vector<double>(boxes.size(), 0.0)};
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t i : order) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].category() != boxes[i].category()) continue;
      const double v = iou_3d(boxes[i], gts[g]);
      m.label_iou[i] = std::max(m.label_iou[i], v);
      if (!m.gt_matched[g] && v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best && best_iou >= default_iou_threshold(boxes[i].category())) {
      m.gt_matched[*best] = true;
      m.label_tp[i] = true;
    }
  }
  return m;
}

struct FrameOutput {
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  std::size_t proposals = 0;
  std::size_t generated = 0;
};

struct FrameData {
  Scene scene;
  std::vector<ObjectCue> cues;
};

FrameOutput run_pipeline(const SelfTrainConfig& cfg, const FrameData& frame, std::size_t frame_index, double scale,
                         double rescore_sd) {
  RandomState oracle_rng = RandomState::derive(cfg.seed, {kOracle, frame_index});
  std::vector<Proposal> props =
      run_oracle(frame.scene.cloud, frame.scene.objects, frame.cues, cfg.oracle, oracle_rng, scale);
  FrameOutput out;
  out.proposals = props.size();
  if (cfg.toggles.interpolation_extrapolation && !props.empty()) {
    std::vector<Proposal> augmented = augment_proposals(props, cfg.ie);
    if (augmented.size() < props.size() || !std::equal(props.begin(), props.end(), augmented.begin())) {
      throw std::logic_error("augment_proposals dropped or changed an input proposal");
    }
    out.generated = augmented.size() - props.size();
    props = std::move(augmented);
  }
  RandomState rescore_rng = RandomState::derive(cfg.seed, {kRescore, frame_index});
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  boxes.reserve(props.size());
  scores.reserve(props.size());
  for (const Proposal& p : props) {
    boxes.push_back(p.box);
    scores.push_back(rescore(p, frame.scene.objects, rescore_sd, rescore_rng));
  }
  for (std::size_t k : nms(boxes, scores, cfg.final_nms_threshold, IouKind::ThreeD)) {
    out.boxes.push_back(boxes[k]);
    out.scores.push_back(scores[k]);
  }
  return out;
}

// Class means of the synthetic RoI feature model.
struct FeatureMeans {
  std::array<std::vector<double>, 3> source;
  std::array<std::vector<double>, 3> target;
};

FeatureMeans initial_means(const FeatureModelConfig& f) {
  FeatureMeans m;
  std::vector<double> common(f.dimension, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    m.source[c].assign(f.dimension, 0.0);
    m.source[c][c] = f.class_separation;
    common[c] = f.class_separation / 3.0;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    m.target[c].resize(f.dimension);
    for (std::size_t k = 0; k < f.dimension; ++k) {
      m.target[c][k] = (1.0 - f.entanglement) * m.source[c][k] + f.entanglement * common[k];
    }
    m.target[c][3] += f.domain_shift;
  }
  return m;
}

std::vector<double> sample_feature(const std::vector<double>& mean, double spread, RandomState& rng) {
  std::vector<double> v(mean.size());
  for (std::size_t k = 0; k < mean.size(); ++k) v[k] = mean[k] + spread * rng.normal();
  return v;
}

double squared_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

// Fraction of a fixed target sample whose nearest source class mean is of another class.
double feature_confusion(const FeatureMeans& m, const std::vector<std::vector<double>>& noise, double spread) {
  if (noise.empty()) return 0.0;
  std::size_t confused = 0;
  std::vector<double> x;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const std::size_t c = i % 3;
    x.resize(noise[i].size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = m.target[c][k] + spread * noise[i][k];
    std::size_t nearest = 0;
    double best = squared_gap(x, m.source[0]);
    for (std::size_t d = 1; d < 3; ++d) {
      const double g = squared_gap(x, m.source[d]);
      if (g < best) {
        best = g;
        nearest = d;
      }
    }
    if (nearest != c) ++confused;
  }
  return static_cast<double>(confused) / static_cast<double>(noise.size());
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::size_t category_slot(Category c) {
  const auto slot = static_cast<std::size_t>(c);
  if (slot >= kKnownCategories.size()) throw InvalidArgument("category id has no synthetic model");
  return slot;
}

Size3 size_prior(Category c) {
  switch (c) {
    case Category::Car:
      return {3.9, 1.6, 1.56};
    case Category::Pedestrian:
      return {0.8, 0.6, 1.73};
    case Category::Cyclist:
      return {1.76, 0.6, 1.73};
  }
  throw InvalidArgument("category id has no size prior");
}

void SceneConfig::validate() const {
  if (!(extent > 0.0) || !std::isfinite(extent)) throw InvalidArgument("scene extent must be > 0");
  if (!(min_range >= 0.0 && min_range < extent)) throw InvalidArgument("scene min_range must lie in [0, extent)");
  for (const auto& p : points) {
    check_non_negative(p.mean, "point count mean");
    check_non_negative(p.stddev, "point count stddev");
  }
  check_rate(elevated_clutter_fraction, "elevated_clutter_fraction");
  check_rate(facing_bias, "facing_bias");
  if (max_placement_attempts == 0) throw InvalidArgument("max_placement_attempts must be >= 1");
}

SceneConfig default_source_scene() {
  SceneConfig s;
  s.points = {{{300.0, 100.0}, {60.0, 20.0}, {80.0, 25.0}}};
  return s;
}

SceneConfig default_target_scene() { return SceneConfig{}; }

Scene generate_scene(const SceneConfig& cfg, RandomState& rng) {
  cfg.validate();
  Scene scene;
  for (Category cat : kKnownCategories) {
    for (std::size_t k = 0; k < cfg.instances[category_slot(cat)]; ++k) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < cfg.max_placement_attempts && !placed; ++attempt) {
        const Size3 size = jittered_size(cat, rng);
        const double x = rng.uniform(-cfg.extent, cfg.extent);
        const double y = rng.uniform(-cfg.extent, cfg.extent);
        const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
        if (std::hypot(x, y) < cfg.min_range) continue;
        const Box3D box({x, y, 0.5 * size.height}, size, heading, cat);
        const bool overlaps = std::any_of(scene.objects.begin(), scene.objects.end(),
                                          [&](const Box3D& other) { return iou_3d(box, other) > 0.0; });
        if (!overlaps) {
          scene.objects.push_back(box);
          placed = true;
        }
      }
      if (!placed) {
        throw CapacityError("could not place a " + category_name(cat) + " after " +
                            std::to_string(cfg.max_placement_attempts) + " attempts");
      }
    }
  }

  for (const Box3D& box : scene.objects) {
    const PointCountModel& model = cfg.points[category_slot(box.category())];
    const auto n = static_cast<std::size_t>(std::max(0.0, std::round(rng.normal(model.mean, model.stddev))));
    const Vec3 toward = ego_to_local(kSensor, box);
    const Size3& s = box.size();
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 local{rng.uniform(-0.5 * s.length, 0.5 * s.length), rng.uniform(-0.5 * s.width, 0.5 * s.width),
                 rng.uniform(-0.5 * s.height, 0.5 * s.height)};
      if (local.x * toward.x + local.y * toward.y < 0.0 && rng.uniform() < cfg.facing_bias) {
        local.x = -local.x;
        local.y = -local.y;
      }
      const Vec3 p = local_to_ego_scaled(local, s, box);
      scene.cloud.push_back({p.x, p.y, p.z, rng.uniform(0.1, 0.9)});
    }
    scene.object_points.push_back(n);
  }

  for (std::size_t i = 0; i < cfg.clutter_points; ++i) {
    bool done = false;
    if (rng.uniform() < cfg.elevated_clutter_fraction) {
      for (int attempt = 0; attempt < 20 && !done; ++attempt) {
        const Vec3 p{rng.uniform(-cfg.extent, cfg.extent), rng.uniform(-cfg.extent, cfg.extent), rng.uniform(0.0, 2.5)};
        if (!inside_any(scene.objects, p)) {
          scene.cloud.push_back({p.x, p.y, p.z, rng.uniform(0.0, 0.5)});
          done = true;
        }
      }
    }
    if (!done) {
      scene.cloud.push_back({rng.uniform(-cfg.extent, cfg.extent), rng.uniform(-cfg.extent, cfg.extent),
                             rng.uniform(-0.25, -0.02), rng.uniform(0.0, 0.5)});
    }
  }
  return scene;
}

void OracleConfig::validate() const {
  check_non_negative(center_noise, "center_noise");
  check_non_negative(size_noise, "size_noise");
  check_non_negative(heading_noise, "heading_noise");
  check_non_negative(confidence_noise, "confidence_noise");
  check_rate(false_positive_rate, "false_positive_rate");
  check_rate(miss_rate, "miss_rate");
  check_non_negative(point_bias, "point_bias");
}

Vec3 density_offset(const PointCloud& cloud, const Box3D& object) {
  return object_cues(cloud, std::span<const Box3D>(&object, 1)).front().offset;
}

std::vector<Proposal> oracle_detector(const PointCloud& cloud, std::span<const Box3D> objects,
                                      const OracleConfig& cfg, RandomState& rng, double error_scale) {
  cfg.validate();
  if (!(error_scale >= 0.0) || !std::isfinite(error_scale)) throw InvalidArgument("error_scale must be >= 0");
  const auto cues = object_cues(cloud, objects);
  return run_oracle(cloud, objects, cues, cfg, rng, error_scale);
}

double rescore(const Proposal& proposal, std::span<const Box3D> objects, double noise_sd, RandomState& rng) {
  double best = 0.0;
  for (const Box3D& o : objects) best = std::max(best, iou_3d(proposal.box, o));
  return std::clamp(best + noise_sd * rng.normal(), 0.0, 1.0);
}

void FeatureModelConfig::validate() const {
  if (dimension < 4) throw InvalidArgument("feature dimension must be >= 4");
  check_non_negative(class_separation, "class_separation");
  if (!(spread > 0.0)) throw InvalidArgument("feature spread must be > 0");
  check_rate(entanglement, "entanglement");
  check_non_negative(domain_shift, "domain_shift");
  check_rate(align_rate, "align_rate");
  check_non_negative(confusion_gain, "confusion_gain");
}

void SelfTrainConfig::validate() const {
  if (frames_per_domain == 0) throw InvalidArgument("frames_per_domain must be >= 1");
  if (epochs == 0) throw InvalidArgument("epochs must be >= 1");
  if (update_period == 0) throw InvalidArgument("update_period must be >= 1");
  (void)margin();
  ie.validate();
  triplet.validate();
  check_rate(final_nms_threshold, "final_nms_threshold");
  check_non_negative(rescore_noise, "rescore_noise");
  check_rate(attenuation_rate, "attenuation_rate");
  check_rate(min_error_scale, "min_error_scale");
  source_scene.validate();
  target_scene.validate();
  oracle.validate();
  features.validate();
}

SelfTrainResult self_train(const SelfTrainConfig& cfg) {
  cfg.validate();
  const ThresholdMargin margin = cfg.margin();
  const std::size_t n_frames = cfg.frames_per_domain;

  std::vector<Scene> source;
  std::vector<FrameData> target;
  source.reserve(n_frames);
  target.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    RandomState srng = RandomState::derive(cfg.seed, {kSourceScene, cfg.source_scene.seed, f});
    source.push_back(generate_scene(cfg.source_scene, srng));
    RandomState trng = RandomState::derive(cfg.seed, {kTargetScene, cfg.target_scene.seed, f});
    Scene scene = generate_scene(cfg.target_scene, trng);
    auto cues = object_cues(scene.cloud, scene.objects);
    target.push_back({std::move(scene), std::move(cues)});
  }
  std::size_t total_gts = 0;
  for (const FrameData& f : target) total_gts += f.scene.objects.size();

  FeatureMeans means = initial_means(cfg.features);
  std::vector<std::vector<double>> confusion_noise;
  {
    RandomState crng = RandomState::derive(cfg.seed, {kConfusion});
    const std::vector<double> zero(cfg.features.dimension, 0.0);
    for (std::size_t i = 0; i < cfg.features.confusion_samples; ++i) confusion_noise.push_back(sample_feature(zero, 1.0, crng));
  }

  SelfTrainResult result;
  double scale = 1.0;
  HighConfDatabase db;
  std::size_t round = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double confusion = feature_confusion(means, confusion_noise, cfg.features.spread);
    const double rescore_sd = cfg.rescore_noise + cfg.features.confusion_gain * confusion;

    std::vector<FrameOutput> outputs;
    outputs.reserve(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) outputs.push_back(run_pipeline(cfg, target[f], f, scale, rescore_sd));

    const bool round_start = epoch % cfg.update_period == 0;
    if (round_start) {
      // Selection: refine (or threshold) this round's pseudo labels and measure
      // how clean the resulting supervision is.
      round = epoch / cfg.update_period;
      db.clear();
      RandomState refine_rng = RandomState::derive(cfg.seed, {kRefine, round});
      RoundSummary summary;
      summary.round = round;
      summary.error_scale = scale;
      double tp = 0.0;
      double fp = 0.0;
      double fn = 0.0;
      double raw_tp = 0.0;
      double raw_n = 0.0;
      double sup_tp = 0.0;
      for (std::size_t f = 0; f < n_frames; ++f) {
        const Scene& scene = target[f].scene;
        std::vector<PseudoLabel> raw;
        for (std::size_t i = 0; i < outputs[f].boxes.size(); ++i) {
          if (outputs[f].scores[i] > cfg.t_neg) raw.emplace_back(outputs[f].boxes[i], outputs[f].scores[i]);
        }
        std::vector<PseudoLabel> supervising;
        PointCloud refined_cloud;
        const PointCloud* cloud_after = &scene.cloud;
        if (cfg.toggles.complementary_augmentation) {
          RefineResult r = refine_labels(scene.cloud, raw, margin, db, refine_rng);
          summary.refine.discarded += r.stats.discarded;
          summary.refine.high_confidence += r.stats.high_confidence;
          summary.refine.replaced += r.stats.replaced;
          summary.refine.point_removed += r.stats.point_removed;
          summary.refine.points_removed += r.stats.points_removed;
          summary.refine.points_pasted += r.stats.points_pasted;
          summary.refine.overlap_warnings += r.stats.overlap_warnings;
          supervising = std::move(r.labels);
          refined_cloud = std::move(r.cloud);
          cloud_after = &refined_cloud;
        } else {
          for (const PseudoLabel& l : raw) {
            if (l.confidence >= cfg.t_pos) supervising.push_back(l);
          }
        }

        std::vector<Box3D> raw_boxes;
        std::vector<double> raw_scores;
        for (const PseudoLabel& l : raw) {
          raw_boxes.push_back(l.box);
          raw_scores.push_back(l.confidence);
        }
        const FrameMatch raw_match = match_frame(raw_boxes, raw_scores, scene.objects);
        const auto raw_frame_tp =
            static_cast<double>(std::count(raw_match.label_tp.begin(), raw_match.label_tp.end(), true));

        // Replaced labels describe the object they pasted, so they supervise
        // correctly; detector labels are matched against the real objects.
        std::vector<Box3D> det_boxes;
        std::vector<double> det_scores;
        double replaced = 0.0;
        for (const PseudoLabel& l : supervising) {
          if (l.provenance == Provenance::Replaced) {
            replaced += 1.0;
          } else {
            det_boxes.push_back(l.box);
            det_scores.push_back(l.confidence);
          }
        }
        const FrameMatch sup_match = match_frame(det_boxes, det_scores, scene.objects);
        const auto det_tp =
            static_cast<double>(std::count(sup_match.label_tp.begin(), sup_match.label_tp.end(), true));
        tp += det_tp + replaced;
        fp += static_cast<double>(det_boxes.size()) - det_tp;
        // Unlabeled objects whose points are still present train as background.
        for (std::size_t g = 0; g < scene.objects.size(); ++g) {
          if (sup_match.gt_matched[g]) continue;
          const std::size_t before = target[f].cues[g].points;
          if (before == 0) continue;
          const std::size_t after = points_in_box(*cloud_after, scene.objects[g]).size();
          fn += std::min(1.0, static_cast<double>(after) / static_cast<double>(before));
        }

        raw_tp += raw_frame_tp;
        raw_n += static_cast<double>(raw.size());
        sup_tp += det_tp + replaced;
        summary.supervising_labels += supervising.size();
        if (!raw.empty() && !supervising.empty()) {
          ++summary.frames_with_labels;
          const double raw_prec = raw_frame_tp / static_cast<double>(raw.size());
          const double sup_prec = (det_tp + replaced) / static_cast<double>(supervising.size());
          if (sup_prec >= raw_prec) ++summary.frames_precision_not_worse;
        }
      }
      const double denom = tp + fp + fn;
      summary.supervision_quality = denom > 0.0 ? tp / denom : 0.0;
      summary.raw_precision = raw_n > 0.0 ? raw_tp / raw_n : 0.0;
      summary.supervising_precision =
          summary.supervising_labels > 0 ? sup_tp / static_cast<double>(summary.supervising_labels) : 0.0;
      result.rounds.push_back(summary);
    }

    // Measurement of this epoch's pseudo labels.
    EpochMetrics m;
    m.epoch = epoch;
    m.round = round;
    m.error_scale = scale;
    m.feature_confusion = confusion;
    std::vector<Detection> all_dets;
    std::vector<GroundTruth> all_gts;
    std::vector<double> label_ious;
    double label_tp = 0.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
      const FrameOutput& out = outputs[f];
      m.proposals += out.proposals;
      m.generated_proposals += out.generated;
      std::vector<Box3D> boxes;
      std::vector<double> scores;
      for (std::size_t i = 0; i < out.boxes.size(); ++i) {
        all_dets.push_back({out.boxes[i], out.scores[i], static_cast<std::int64_t>(f)});
        if (out.scores[i] > cfg.t_neg) {
          boxes.push_back(out.boxes[i]);
          scores.push_back(out.scores[i]);
        }
      }
      for (const Box3D& g : target[f].scene.objects) all_gts.push_back({g, static_cast<std::int64_t>(f)});
      const FrameMatch fm = match_frame(boxes, scores, target[f].scene.objects);
      label_tp += static_cast<double>(std::count(fm.label_tp.begin(), fm.label_tp.end(), true));
      label_ious.insert(label_ious.end(), fm.label_iou.begin(), fm.label_iou.end());
    }
    m.precision = label_ious.empty() ? 0.0 : label_tp / static_cast<double>(label_ious.size());
    m.recall = total_gts == 0 ? 0.0 : label_tp / static_cast<double>(total_gts);
    m.mean_iou = mean_of(label_ious);
    std::vector<double> ap3d;
    std::vector<double> apbev;
    for (Category c : kKnownCategories) {
      const bool present = std::any_of(all_gts.begin(), all_gts.end(),
                                       [&](const GroundTruth& g) { return g.box.category() == c; });
      if (!present) continue;
      ap3d.push_back(average_precision(all_dets, all_gts, c, default_iou_threshold(c), IouKind::ThreeD));
      apbev.push_back(average_precision(all_dets, all_gts, c, default_iou_threshold(c), IouKind::Bev));
    }
    m.ap_3d = mean_of(ap3d);
    m.ap_bev = mean_of(apbev);

    if (cfg.toggles.alignment) {
      RandomState frng = RandomState::derive(cfg.seed, {kFeatures, epoch});
      std::vector<RoiFeature> src_batch;
      std::vector<RoiFeature> tgt_batch;
      for (std::size_t b = 0; b < cfg.features.batch_per_domain; ++b) {
        const Scene& s = source[frng.index(n_frames)];
        if (s.objects.empty()) continue;
        const Category c = s.objects[frng.index(s.objects.size())].category();
        src_batch.emplace_back(sample_feature(means.source[category_slot(c)], cfg.features.spread, frng),
                               Domain::Source, c);
      }
      std::vector<const Box3D*> labels;
      for (const FrameOutput& out : outputs) {
        for (std::size_t i = 0; i < out.boxes.size(); ++i) {
          if (out.scores[i] > cfg.t_neg) labels.push_back(&out.boxes[i]);
        }
      }
      for (std::size_t b = 0; b < cfg.features.batch_per_domain && !labels.empty(); ++b) {
        const Category c = labels[frng.index(labels.size())]->category();
        tgt_batch.emplace_back(sample_feature(means.target[category_slot(c)], cfg.features.spread, frng),
                               Domain::Target, c);
      }
      const TripletLoss loss = total_triplet_loss(src_batch, tgt_batch, cfg.triplet.alpha);
      m.triplet_loss = loss.total;
      const double anchors = static_cast<double>(src_batch.size() + tgt_batch.size());
      if (anchors > 0.0) {
        const double normalized = loss.total / (2.0 * anchors * cfg.triplet.alpha);
        const double step = cfg.features.align_rate * std::min(1.0, normalized);
        for (std::size_t c = 0; c < 3; ++c) {
          for (std::size_t k = 0; k < cfg.features.dimension; ++k) {
            means.target[c][k] += step * (means.source[c][k] - means.target[c][k]);
          }
        }
      }
      if (epoch + 1 == cfg.epochs) {
        result.final_features = std::move(src_batch);
        result.final_features.insert(result.final_features.end(), tgt_batch.begin(), tgt_batch.end());
      }
    }
    result.epochs.push_back(m);

    // Training proxy: at the end of each round the detector improves in
    // proportion to the quality of the supervision it was given.
    if ((epoch + 1) % cfg.update_period == 0 || epoch + 1 == cfg.epochs) {
      const double q = result.rounds.back().supervision_quality;
      scale = std::max(cfg.min_error_scale, scale * (1.0 - cfg.attenuation_rate * q));
    }
  }
  return result;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows) {
  out << "epoch,round,precision,recall,mean_iou,triplet_loss,ap_3d,ap_bev\n";
  for (const EpochMetrics& m : rows) {
    out << m.epoch << ',' << m.round << ',' << format_real(m.precision) << ',' << format_real(m.recall) << ','
        << format_real(m.mean_iou) << ',' << format_real(m.triplet_loss) << ',' << format_real(m.ap_3d) << ','
        << format_real(m.ap_bev) << '\n';
  }
}

}  // namespace plr
