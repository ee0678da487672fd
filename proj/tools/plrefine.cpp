// plrefine: command-line front end over the pseudo-label refinery.
//
//   plrefine [--seed N] [--config cfg.json] [--out DIR] [--quiet] <command> [options]
//
// Every command writes <out>/manifest.json holding the resolved configuration
// and the command's own arguments.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plrefine/alignment.hpp"
#include "plrefine/config.hpp"
#include "plrefine/error.hpp"
#include "plrefine/evaluation.hpp"
#include "plrefine/harness.hpp"
#include "plrefine/io.hpp"
#include "plrefine/proposals.hpp"
#include "plrefine/refinery.hpp"
#include "plrefine/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "plrefine_out";
  bool quiet = false;
};

// Stream tags for the commands that draw random numbers.
enum CliStream : std::uint64_t { kGenSource = 1, kGenTarget, kGenOracle, kGenRescore, kRefineStream };

plr::SelfTrainConfig resolve_config(const Globals& g) {
  plr::SelfTrainConfig cfg = g.config.empty() ? plr::SelfTrainConfig{} : plr::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw plr::FormatError("cannot write " + path.string());
  return out;
}

class Logger {
 public:
  explicit Logger(bool quiet) : quiet_(quiet) {}
  template <class... Args>
  void operator()(const Args&... args) const {
    if (quiet_) return;
    (std::cerr << ... << args);
    std::cerr << '\n';
  }

 private:
  bool quiet_;
};

// Label and proposal files are both accepted wherever boxes are read.
std::vector<plr::ProposalRecord> labels_for(const fs::path& dir, std::int64_t frame_id) {
  const fs::path file = dir / (plr::frame_stem(frame_id) + ".txt");
  if (!fs::exists(file)) return {};
  return plr::load_proposals(file);
}

// All records of every *.txt file in `dir`, in file-name order.
std::vector<plr::ProposalRecord> labels_in_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw plr::FormatError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<plr::ProposalRecord> out;
  for (const fs::path& f : files) {
    auto part = plr::load_proposals(f);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void write_domain(const fs::path& root, const plr::SceneConfig& scene_cfg, const plr::SelfTrainConfig& cfg,
                  std::uint64_t tag, bool with_proposals) {
  fs::create_directories(root / "points");
  fs::create_directories(root / "labels");
  if (with_proposals) {
    fs::create_directories(root / "proposals");
    fs::create_directories(root / "pseudo_labels");
  }
  for (std::size_t f = 0; f < cfg.frames_per_domain; ++f) {
    const auto id = static_cast<std::int64_t>(f);
    plr::RandomState rng = plr::RandomState::derive(cfg.seed, {tag, scene_cfg.seed, f});
    const plr::Scene scene = plr::generate_scene(scene_cfg, rng);
    const plr::FrameBundle bundle = plr::frame_bundle(root, id);
    plr::store_point_cloud(bundle.points, scene.cloud);
    std::vector<plr::LabelRecord> gts;
    for (const plr::Box3D& b : scene.objects) gts.push_back({id, b, 1.0});
    plr::store_labels(bundle.labels, gts);
    if (with_proposals) {
      // First-stage proposals, and pseudo labels made from them by rescoring
      // and final NMS.
      plr::RandomState orng = plr::RandomState::derive(cfg.seed, {kGenOracle, f});
      plr::RandomState rrng = plr::RandomState::derive(cfg.seed, {kGenRescore, f});
      std::vector<plr::ProposalRecord> props;
      std::vector<plr::Box3D> boxes;
      std::vector<double> scores;
      for (const plr::Proposal& p : plr::oracle_detector(scene.cloud, scene.objects, cfg.oracle, orng)) {
        props.push_back({id, p});
        boxes.push_back(p.box);
        scores.push_back(plr::rescore(p, scene.objects, cfg.rescore_noise, rrng));
      }
      std::ofstream out = open_out(root / "proposals" / (plr::frame_stem(id) + ".txt"));
      plr::write_proposals(out, props);
      std::vector<plr::LabelRecord> pseudo;
      for (std::size_t k : plr::nms(boxes, scores, cfg.final_nms_threshold)) pseudo.push_back({id, boxes[k], scores[k]});
      plr::store_labels(root / "pseudo_labels" / (plr::frame_stem(id) + ".txt"), pseudo);
    }
  }
}

void run_gen(const Globals& g, const plr::SelfTrainConfig& cfg, json& run) {
  const Logger log(g.quiet);
  const fs::path out(g.out);
  write_domain(out / "source", cfg.source_scene, cfg, kGenSource, false);
  write_domain(out / "target", cfg.target_scene, cfg, kGenTarget, true);
  run["frames_per_domain"] = cfg.frames_per_domain;
  log("gen: wrote ", cfg.frames_per_domain, " frames per domain under ", out.string());
}

struct RefineArgs {
  std::string data;
  std::string labels;  // default <data>/pseudo_labels
};

void run_refine(const Globals& g, const plr::SelfTrainConfig& cfg, const RefineArgs& a, json& run) {
  const Logger log(g.quiet);
  const fs::path data(a.data);
  const fs::path label_dir = a.labels.empty() ? data / "pseudo_labels" : fs::path(a.labels);
  const fs::path out(g.out);
  fs::create_directories(out / "points");
  fs::create_directories(out / "labels");
  std::ofstream stats = open_out(out / "refine_stats.csv");
  stats << "frame,points_before,points_after,removed,pasted,discarded,high_confidence,replaced,point_removed,"
           "overlap_warnings\n";

  plr::HighConfDatabase db;
  plr::RandomState rng = plr::RandomState::derive(cfg.seed, {kRefineStream});
  std::size_t frames = 0;
  for (const plr::FrameBundle& bundle : plr::list_frames(data)) {
    const plr::PointCloud cloud = plr::load_point_cloud(bundle.points);
    std::vector<plr::PseudoLabel> labels;
    for (const plr::ProposalRecord& r : labels_for(label_dir, bundle.frame_id)) {
      labels.emplace_back(r.proposal.box, r.proposal.confidence);
    }
    const plr::RefineResult res = plr::refine_labels(cloud, labels, cfg.margin(), db, rng);
    if (res.cloud.size() + res.stats.points_removed != cloud.size() + res.stats.points_pasted) {
      throw std::logic_error("point conservation violated on frame " + std::to_string(bundle.frame_id));
    }
    const plr::FrameBundle dst = plr::frame_bundle(out, bundle.frame_id);
    plr::store_point_cloud(dst.points, res.cloud);
    std::vector<plr::LabelRecord> kept;
    for (const plr::PseudoLabel& l : res.labels) kept.push_back({bundle.frame_id, l.box, l.confidence});
    plr::store_labels(dst.labels, kept);
    const plr::RefineStats& s = res.stats;
    stats << bundle.frame_id << ',' << cloud.size() << ',' << res.cloud.size() << ',' << s.points_removed << ','
          << s.points_pasted << ',' << s.discarded << ',' << s.high_confidence << ',' << s.replaced << ','
          << s.point_removed << ',' << s.overlap_warnings << '\n';
    ++frames;
  }
  run["data"] = a.data;
  run["labels"] = label_dir.string();
  log("refine: ", frames, " frames written under ", out.string());
}

struct ProposeArgs {
  std::string data;
  std::string labels;  // default <data>/proposals
};

void run_propose(const Globals& g, const plr::SelfTrainConfig& cfg, const ProposeArgs& a, json& run) {
  const Logger log(g.quiet);
  const fs::path label_dir = a.labels.empty() ? fs::path(a.data) / "proposals" : fs::path(a.labels);
  const fs::path out = fs::path(g.out) / "proposals";
  fs::create_directories(out);
  std::ofstream summary = open_out(fs::path(g.out) / "propose_stats.csv");
  summary << "frame,input,generated\n";
  std::map<std::int64_t, std::vector<plr::Proposal>> frames;
  for (const plr::ProposalRecord& r : labels_in_dir(label_dir)) frames[r.frame_id].push_back(r.proposal);
  for (const auto& [id, props] : frames) {
    const std::vector<plr::Proposal> aug = plr::augment_proposals(props, cfg.ie);
    std::vector<plr::ProposalRecord> records;
    for (const plr::Proposal& p : aug) records.push_back({id, p});
    std::ofstream f = open_out(out / (plr::frame_stem(id) + ".txt"));
    plr::write_proposals(f, records);
    summary << id << ',' << props.size() << ',' << aug.size() - props.size() << '\n';
  }
  run["labels"] = label_dir.string();
  log("propose: ", frames.size(), " frames written under ", out.string());
}

struct AlignArgs {
  std::vector<std::string> features;
  double det_loss = 0.0;
};

void run_align(const Globals& g, const plr::SelfTrainConfig& cfg, const AlignArgs& a, json& run) {
  const Logger log(g.quiet);
  std::vector<plr::RoiFeature> source;
  std::vector<plr::RoiFeature> target;
  for (const std::string& path : a.features) {
    std::ifstream in(path);
    if (!in) throw plr::FormatError("cannot open " + path);
    for (plr::RoiFeature& f : plr::read_features_csv(in)) {
      (f.domain == plr::Domain::Source ? source : target).push_back(std::move(f));
    }
  }
  const plr::TripletLoss loss = plr::total_triplet_loss(source, target, cfg.triplet.alpha);
  std::ofstream out = open_out(fs::path(g.out) / "triplet.csv");
  out << "source_features,target_features,l_intra,l_inter,l_total,combined\n";
  out << source.size() << ',' << target.size() << ',' << plr::format_real(loss.intra) << ','
      << plr::format_real(loss.inter) << ',' << plr::format_real(loss.total) << ','
      << plr::format_real(plr::combined_loss(a.det_loss, loss.total, cfg.triplet)) << '\n';
  run["features"] = a.features;
  run["det_loss"] = a.det_loss;
  log("align: total triplet loss ", plr::format_real(loss.total));
}

struct EvalArgs {
  std::string detections;
  std::string ground_truth;
  std::string reference;
  std::string task = "eval";
};

void run_eval(const Globals& g, const EvalArgs& a, json& run) {
  const Logger log(g.quiet);
  std::vector<plr::Detection> dets;
  for (const plr::ProposalRecord& r : labels_in_dir(a.detections)) {
    dets.push_back({r.proposal.box, r.proposal.confidence, r.frame_id});
  }
  std::vector<plr::GroundTruth> gts;
  for (const plr::ProposalRecord& r : labels_in_dir(a.ground_truth)) gts.push_back({r.proposal.box, r.frame_id});
  std::map<plr::Category, plr::ReferenceAp> reference;
  if (!a.reference.empty()) {
    std::ifstream in(a.reference);
    if (!in) throw plr::FormatError("cannot open " + a.reference);
    reference = plr::read_reference_csv(in);
  }
  const auto rows = plr::evaluate(dets, gts, a.task, reference);
  std::ofstream out = open_out(fs::path(g.out) / "eval.csv");
  plr::write_eval_csv(out, rows);
  run["detections"] = a.detections;
  run["ground_truth"] = a.ground_truth;
  run["reference"] = a.reference;
  run["task"] = a.task;
  for (const plr::EvalRow& r : rows) {
    log(plr::category_name(r.category), ": AP_BEV ", plr::format_real(r.ap_bev), " AP_3D ", plr::format_real(r.ap_3d));
  }
}

void run_selftrain(const Globals& g, const plr::SelfTrainConfig& cfg, json& run) {
  const Logger log(g.quiet);
  const plr::SelfTrainResult result = plr::self_train(cfg);
  const fs::path out(g.out);
  {
    std::ofstream f = open_out(out / "metrics.csv");
    plr::write_metrics_csv(f, result.epochs);
  }
  {
    std::ofstream f = open_out(out / "rounds.csv");
    f << "round,error_scale,supervision_quality,supervising_labels,raw_precision,supervising_precision,replaced,"
         "point_removed\n";
    for (const plr::RoundSummary& r : result.rounds) {
      f << r.round << ',' << plr::format_real(r.error_scale) << ',' << plr::format_real(r.supervision_quality) << ','
        << r.supervising_labels << ',' << plr::format_real(r.raw_precision) << ','
        << plr::format_real(r.supervising_precision) << ',' << r.refine.replaced << ',' << r.refine.point_removed
        << '\n';
    }
  }
  if (!result.final_features.empty()) {
    std::ofstream f = open_out(out / "features.csv");
    plr::write_features_csv(f, result.final_features);
  }
  const plr::EpochMetrics& last = result.epochs.back();
  run["epochs"] = cfg.epochs;
  log("selftrain: final mean_iou ", plr::format_real(last.mean_iou), " precision ", plr::format_real(last.precision),
      " recall ", plr::format_real(last.recall));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label refinery for LiDAR 3D detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config, "JSON configuration or manifest")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* gen = app.add_subcommand("gen", "Write a synthetic source/target dataset");

  RefineArgs refine_args;
  auto* refine = app.add_subcommand("refine", "Complementary augmentation over a dataset's pseudo labels");
  refine->add_option("--data", refine_args.data, "Dataset root with points/")->required()->check(CLI::ExistingDirectory);
  refine->add_option("--labels", refine_args.labels, "Pseudo-label directory (default <data>/pseudo_labels)");

  ProposeArgs propose_args;
  auto* propose = app.add_subcommand("propose", "Interpolation/extrapolation proposals from label files");
  propose->add_option("--data", propose_args.data, "Dataset root")->check(CLI::ExistingDirectory);
  propose->add_option("--labels", propose_args.labels, "Proposal directory (default <data>/proposals)");

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "Triplet loss over RoI feature CSVs");
  align->add_option("--features", align_args.features, "Feature CSV files")->required()->check(CLI::ExistingFile);
  align->add_option("--det-loss", align_args.det_loss, "Detection loss to combine with");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "AP_BEV / AP_3D at 40 recall positions");
  eval->add_option("--detections", eval_args.detections, "Directory of detection label files")->required();
  eval->add_option("--ground-truth", eval_args.ground_truth, "Directory of ground-truth label files")->required();
  eval->add_option("--reference", eval_args.reference, "Source-only/oracle AP CSV for closed gaps")
      ->check(CLI::ExistingFile);
  eval->add_option("--task", eval_args.task, "Task name for the CSV")->capture_default_str();

  auto* selftrain = app.add_subcommand("selftrain", "Run the synthetic self-training loop");

  CLI11_PARSE(app, argc, argv);
  if (propose->parsed() && propose_args.data.empty() && propose_args.labels.empty()) {
    std::cerr << "propose: give --data or --labels\n";
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    const plr::SelfTrainConfig cfg = resolve_config(g);
    fs::create_directories(g.out);
    json run = json::object();
    std::string command;
    if (gen->parsed()) {
      command = "gen";
      run_gen(g, cfg, run);
    } else if (refine->parsed()) {
      command = "refine";
      run_refine(g, cfg, refine_args, run);
    } else if (propose->parsed()) {
      command = "propose";
      run_propose(g, cfg, propose_args, run);
    } else if (align->parsed()) {
      command = "align";
      run_align(g, cfg, align_args, run);
    } else if (eval->parsed()) {
      command = "eval";
      run_eval(g, eval_args, run);
    } else if (selftrain->parsed()) {
      command = "selftrain";
      run_selftrain(g, cfg, run);
    }
    json manifest_run = {{"command", command}, {"seed", cfg.seed}};
    manifest_run.update(run);
    plr::store_manifest(fs::path(g.out) / "manifest.json", cfg, manifest_run);
  } catch (const std::exception& e) {
    std::cerr << "plrefine: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
