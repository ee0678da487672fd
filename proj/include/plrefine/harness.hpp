#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "plrefine/alignment.hpp"
#include "plrefine/geometry.hpp"
#include "plrefine/proposals.hpp"
#include "plrefine/random.hpp"
#include "plrefine/refinery.hpp"

namespace plr {

// Index of a known category in the per-category arrays below.
std::size_t category_slot(Category c);

// Mean object size per known category (l, w, h), KITTI-like.
Size3 size_prior(Category c);

struct PointCountModel {
  double mean = 0.0;
  double stddev = 0.0;
};

// Synthetic frame generator settings for one domain. Per-object point counts
// differ between domains to model high-beam vs low-beam sensors.
struct SceneConfig {
  std::array<std::size_t, 3> instances{6, 3, 2};  // Car, Pedestrian, Cyclist per frame
  std::array<PointCountModel, 3> points{{{60.0, 25.0}, {12.0, 6.0}, {16.0, 8.0}}};
  double extent = 40.0;        // objects and clutter lie in [-extent, extent]^2
  double min_range = 4.0;      // no object centers closer to the sensor than this
  std::size_t clutter_points = 1500;
  double elevated_clutter_fraction = 0.2;  // clutter above ground, kept out of objects
  double facing_bias = 0.7;    // chance to mirror a point onto the sensor-facing half
  std::size_t max_placement_attempts = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

SceneConfig default_source_scene();
SceneConfig default_target_scene();

struct Scene {
  PointCloud cloud;
  std::vector<Box3D> objects;
  std::vector<std::size_t> object_points;  // points generated inside each object
};

// Non-overlapping objects on a ground plane at z = 0, object points sampled
// inside each box with a bias toward the sensor-facing side, plus clutter that
// never falls inside an object. Throws CapacityError when an object cannot be
// placed within max_placement_attempts.
Scene generate_scene(const SceneConfig& cfg, RandomState& rng);

struct OracleConfig {
  double center_noise = 0.3;       // m, per horizontal axis
  double size_noise = 0.06;        // relative
  double heading_noise = 0.06;     // rad
  double confidence_noise = 0.08;  // added to the true IoU
  double false_positive_rate = 0.3;  // expected false positives per object
  double miss_rate = 0.1;
  double point_bias = 0.6;  // center drift per meter of point-centroid offset
  std::size_t proposals_per_object = 4;
  std::size_t min_points = 3;  // objects with fewer points are never proposed

  void validate() const;
};

// Noise model standing in for a detector's first stage.
//
// Every object is missed with probability miss_rate * error_scale; otherwise
// it yields proposals_per_object perturbed copies whose centers also drift
// toward the centroid of the object's points. Confidence is the true 3D IoU
// plus noise, clamped to [0, 1]. Poisson false positives with confidence
// below 0.5 are placed on random cloud points. All noise terms scale with
// `error_scale`; the number of draws per object is fixed.
std::vector<Proposal> oracle_detector(const PointCloud& cloud, std::span<const Box3D> objects,
                                      const OracleConfig& cfg, RandomState& rng, double error_scale = 1.0);

// Direction (ego frame, z = 0) from an object's center to the centroid of its
// points, zero when the object holds no points.
Vec3 density_offset(const PointCloud& cloud, const Box3D& object);

// Second-stage stand-in: max true 3D IoU against `objects` plus N(0, noise_sd), clamped.
double rescore(const Proposal& proposal, std::span<const Box3D> objects, double noise_sd, RandomState& rng);

struct FeatureModelConfig {
  std::size_t dimension = 32;
  std::size_t batch_per_domain = 48;
  double class_separation = 4.0;  // distance of each source class mean from the origin
  double spread = 1.0;            // per-component standard deviation
  double entanglement = 0.85;     // target means pulled this far toward their common mean
  double domain_shift = 1.5;      // norm of the offset applied to every target mean
  double align_rate = 0.15;
  double confusion_gain = 0.25;   // extra rescore noise per unit of feature confusion
  std::size_t confusion_samples = 300;

  void validate() const;
};

struct Toggles {
  bool complementary_augmentation = true;
  bool interpolation_extrapolation = true;
  bool alignment = true;
};

struct SelfTrainConfig {
  std::uint64_t seed = 0;
  std::size_t frames_per_domain = 200;
  std::size_t epochs = 30;
  std::size_t update_period = 2;  // k
  double t_neg = 0.25;
  double t_pos = 0.6;
  IEConfig ie;
  TripletConfig triplet;
  Toggles toggles;
  double final_nms_threshold = 0.1;
  double rescore_noise = 0.04;
  double attenuation_rate = 0.1;   // error scale *= 1 - rate * supervision quality, per update
  double min_error_scale = 0.05;
  SceneConfig source_scene = default_source_scene();
  SceneConfig target_scene = default_target_scene();
  OracleConfig oracle;
  FeatureModelConfig features;

  ThresholdMargin margin() const { return {t_neg, t_pos}; }
  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t round = 0;
  double precision = 0.0;
  double recall = 0.0;
  double mean_iou = 0.0;
  double triplet_loss = 0.0;
  double ap_3d = 0.0;
  double ap_bev = 0.0;
  // diagnostics, not part of the metrics CSV
  double error_scale = 1.0;
  double feature_confusion = 0.0;
  std::size_t proposals = 0;
  std::size_t generated_proposals = 0;
};

struct RoundSummary {
  std::size_t round = 0;
  double error_scale = 1.0;
  double supervision_quality = 0.0;
  std::size_t supervising_labels = 0;
  double raw_precision = 0.0;          // pseudo labels above t_neg
  double supervising_precision = 0.0;  // labels that actually supervise
  std::size_t frames_precision_not_worse = 0;
  std::size_t frames_with_labels = 0;
  RefineStats refine;
};

struct SelfTrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<RoundSummary> rounds;
  std::vector<RoiFeature> final_features;  // last alignment batch, for external plotting
};

// Desk-scale self-training loop. Per round of `update_period` epochs: the
// current oracle labels the target frames, the labels are refined (CA) or
// thresholded at t_pos, and the supervision quality of the result attenuates
// the oracle's error scale for the next round. Every epoch runs the proposal
// pipeline (oracle, optional interpolation/extrapolation, rescoring, final
// NMS), measures the pseudo labels and, if enabled, takes one alignment step
// on synthetic RoI features. Deterministic in the config.
SelfTrainResult self_train(const SelfTrainConfig& cfg);

// Header "epoch,round,precision,recall,mean_iou,triplet_loss,ap_3d,ap_bev".
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows);

}  // namespace plr
