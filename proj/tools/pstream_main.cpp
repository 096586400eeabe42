// pstream: train, localize and evaluate the streaming actor localizer.
//
// Exit status: 0 success, 2 usage or configuration error, 3 data error,
// 4 numeric failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "pstream/checkpoint.hpp"
#include "pstream/config.hpp"
#include "pstream/container.hpp"
#include "pstream/engine.hpp"
#include "pstream/error.hpp"
#include "pstream/evaluation.hpp"
#include "pstream/jsonl.hpp"
#include "pstream/synth.hpp"

namespace fs = std::filesystem;
using namespace pstream;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kNonFinite:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

// Overrides layered on top of the defaults (or a --config file).
struct ConfigFlags {
  std::string config_file;
  std::optional<std::size_t> depth, hidden, attention, actor_hidden, top_k, max_boxes;
  std::optional<double> lambda1, lambda2, lr0;
  bool no_hierarchy = false;
  bool no_feature_loss = false;
  bool no_geometry_loss = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--depth", depth, "prediction stack depth");
    app->add_flag("--no-hierarchy", no_hierarchy, "single-layer prediction stack");
    app->add_option("--hidden", hidden, "hidden size of the stack layers");
    app->add_option("--attention-dim", attention, "inner size of the additive attention");
    app->add_option("--actor-hidden", actor_hidden, "hidden size of the actor predictors");
    app->add_option("--lambda1", lambda1, "event-loss weight");
    app->add_option("--lambda2", lambda2, "object-loss weight");
    app->add_option("--lr0", lr0, "initial learning rate");
    app->add_flag("--no-feature-loss", no_feature_loss, "drop the actor feature term");
    app->add_flag("--no-geometry-loss", no_geometry_loss, "drop the box geometry term");
    add_localization(app);
  }

  void add_localization(CLI::App* app) {
    app->add_option("--K", top_k, "attended grids per frame");
    app->add_option("--N", max_boxes, "boxes emitted per frame");
  }

  void apply(RunConfig& c) const {
    if (depth) c.depth = *depth;
    if (no_hierarchy) c.depth = 1;
    if (hidden) c.hidden_dim = *hidden;
    if (attention) c.attention_dim = *attention;
    if (actor_hidden) c.actor_hidden_dim = *actor_hidden;
    if (top_k) c.top_k = *top_k;
    if (max_boxes) c.max_boxes = *max_boxes;
    if (lambda1) c.lambda1 = *lambda1;
    if (lambda2) c.lambda2 = *lambda2;
    if (lr0) c.lr0 = *lr0;
    if (no_feature_loss) c.feature_loss = false;
    if (no_geometry_loss) c.geometry_loss = false;
  }

  RunConfig build(std::uint64_t seed) const {
    RunConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      std::stringstream text;
      text << in.rdbuf();
      c = config_from_json(text.str());
    }
    apply(c);
    c.seed = seed;
    validate(c);
    return c;
  }
};

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    fs::path p = line.substr(first, last - first + 1);
    if (p.is_relative()) p = fs::path(path).parent_path() / p;
    out.push_back(p.string());
  }
  return out;
}

std::vector<std::string> gather_inputs(const std::string& manifest,
                                       const std::vector<std::string>& files) {
  std::vector<std::string> out;
  if (!manifest.empty()) out = read_manifest(manifest);
  out.insert(out.end(), files.begin(), files.end());
  return out;
}

void echo_config(const RunConfig& config) {
  std::cerr << "config " << to_json(config, -1) << "\n";
}

std::string shape_string(std::size_t w, std::size_t h, std::size_t c) {
  return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(c);
}

class OutputFile {
 public:
  explicit OutputFile(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path, std::ios::trunc);
    if (!file_) throw Error(ErrorCode::kIo, "cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// Frozen (or continual) localization over a set of videos. Rows come back
// grouped per video, videos ordered by id.
std::vector<std::string> localize_videos(const Model& model, const RunConfig& config,
                                         std::size_t grid_w, std::size_t grid_h,
                                         const std::vector<std::string>& paths, bool continual,
                                         std::size_t jobs) {
  struct VideoRows {
    std::string id;
    std::vector<std::string> rows;
  };
  std::vector<VideoRows> per_video(paths.size());
  auto run = [&](Learner& learner, std::size_t v) {
    SequenceReader reader{fs::path(paths[v])};
    const auto& h = reader.header();
    if (h.width != grid_w || h.height != grid_h || h.channels != model.feature_dim()) {
      throw Error(ErrorCode::kDimInconsistent,
                  paths[v] + " has shape " + shape_string(h.width, h.height, h.channels) +
                      " but the checkpoint expects " +
                      shape_string(grid_w, grid_h, model.feature_dim()));
    }
    per_video[v].id = h.video_id;
    learner.begin_video();
    while (auto frame = reader.next()) {
      if (auto step = learner.observe(frame->feature, frame->proposals)) {
        per_video[v].rows.push_back(localization_row(h.video_id, *step));
      }
    }
  };
  if (continual) {
    // One model carried across videos in input order.
    Learner learner(model, config, true);
    for (std::size_t v = 0; v < paths.size(); ++v) run(learner, v);
  } else {
    tools::parallel_for(paths.size(), jobs, [&](std::size_t v) {
      Learner learner(model, config, false);
      run(learner, v);
    });
  }
  std::stable_sort(per_video.begin(), per_video.end(),
                   [](const VideoRows& a, const VideoRows& b) { return a.id < b.id; });
  std::vector<std::string> rows;
  for (auto& v : per_video) {
    for (auto& r : v.rows) rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::vector<std::string> files;
  std::string out;
  std::string metrics;
  std::string train_domain;
  std::string eval_domain;
  std::string eval_out;
  std::size_t jobs = 1;
};

int run_train(const TrainArgs& args, const ConfigFlags& flags, std::uint64_t seed) {
  const RunConfig config = flags.build(seed);
  std::vector<std::string> inputs = gather_inputs(args.manifest, args.files);
  if (!args.train_domain.empty()) {
    const auto domain = read_manifest(args.train_domain);
    inputs.insert(inputs.end(), domain.begin(), domain.end());
  }
  if (inputs.empty()) {
    std::cerr << "error: no training videos given (manifest is empty)\n";
    return kExitUsage;
  }
  echo_config(config);

  std::optional<OutputFile> metrics;
  if (!args.metrics.empty()) metrics.emplace(args.metrics);

  std::optional<Learner> learner;
  std::size_t grid_w = 0, grid_h = 0;
  std::size_t skipped = 0;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& path : inputs) {
    std::optional<SequenceReader> reader;
    try {
      reader.emplace(fs::path(path));
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
      ++skipped;
      continue;
    }
    const auto& h = reader->header();
    if (!learner) {
      grid_w = h.width;
      grid_h = h.height;
      validate_for_grid(config, grid_w, grid_h);
      learner.emplace(Model(config, h.channels), config, true);
    } else if (h.width != grid_w || h.height != grid_h ||
               h.channels != learner->model().feature_dim()) {
      std::cerr << "warning: skipping " << path << ": shape "
                << shape_string(h.width, h.height, h.channels) << " differs from "
                << shape_string(grid_w, grid_h, learner->model().feature_dim()) << "\n";
      ++skipped;
      continue;
    }
    learner->begin_video();
    try {
      while (auto frame = reader->next()) {
        if (auto step = learner->observe(frame->feature, frame->proposals)) {
          if (metrics) {
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            metrics->stream() << metrics_row(h.video_id, *step, wall) << "\n";
          }
        }
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFinite) throw;
      std::cerr << "warning: " << path << " ended early: " << e.what() << "\n";
      ++skipped;
    }
  }
  if (!learner) {
    std::cerr << "error: none of the " << inputs.size() << " videos could be read\n";
    return kExitData;
  }
  if (!args.out.empty()) {
    save_model(args.out, learner->model(), config, grid_w, grid_h, learner->lr().lr);
  }
  std::cerr << "trained " << learner->model().updates << " steps\n";

  if (!args.eval_domain.empty()) {
    const auto eval_inputs = read_manifest(args.eval_domain);
    OutputFile out(args.eval_out);
    for (const auto& row : localize_videos(learner->model(), config, grid_w, grid_h, eval_inputs,
                                           false, args.jobs)) {
      out.stream() << row << "\n";
    }
  }
  if (skipped > 0) {
    std::cerr << skipped << " of " << inputs.size() << " videos skipped\n";
    return kExitData;
  }
  return kExitOk;
}

// ------------------------------------------------------------- localize

struct LocalizeArgs {
  std::string checkpoint;
  std::string manifest;
  std::vector<std::string> files;
  std::string out;
  bool continual = false;
  std::size_t jobs = 1;
};

int run_localize(const LocalizeArgs& args, const ConfigFlags& flags, std::uint64_t seed) {
  ModelCheckpoint ck = load_model(fs::path(args.checkpoint));
  RunConfig config = ck.config;
  flags.apply(config);
  config.seed = seed;
  validate(config);
  validate_for_grid(config, ck.grid_width, ck.grid_height);
  echo_config(config);
  const auto inputs = gather_inputs(args.manifest, args.files);
  const auto rows = localize_videos(ck.model, config, ck.grid_width, ck.grid_height, inputs,
                                    args.continual, args.jobs);
  OutputFile out(args.out);
  for (const auto& row : rows) out.stream() << row << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string predictions;
  std::vector<std::string> ground_truth;
  std::string ground_truth_manifest;
  std::optional<std::size_t> k;
  bool k_scan = false;
  std::string rank_by = "margin";
  std::string out;
  std::string csv;
  std::size_t jobs = 1;
};

int run_evaluate(const EvaluateArgs& args, std::uint64_t seed) {
  std::ifstream pred_in(args.predictions);
  if (!pred_in) throw Error(ErrorCode::kIo, "cannot open " + args.predictions);
  const auto predictions = read_predictions(pred_in);

  const auto gt_paths = gather_inputs(args.ground_truth_manifest, args.ground_truth);
  std::vector<VideoTruth> truths(gt_paths.size());
  tools::parallel_for(gt_paths.size(), args.jobs, [&](std::size_t i) {
    truths[i] = truth_from_sequence(read_sequence(fs::path(gt_paths[i])));
  });

  EvaluationOptions options;
  options.k = args.k;
  options.scan_k = args.k_scan;
  options.rank_by = args.rank_by == "tube-iou" ? RankBy::kTubeIou : RankBy::kMargin;
  options.seed = seed;
  const auto report = evaluate(predictions, truths, options);

  OutputFile out(args.out);
  out.stream() << report_json(report) << "\n";
  if (!args.csv.empty()) {
    OutputFile csv(args.csv);
    csv.stream() << report_csv(report);
  }
  for (const auto& id : report.missing_ground_truth) {
    std::cerr << "warning: no ground truth for " << id << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthSpec spec;
  std::string out;
  int label = -1;
  bool no_actor = false;
};

int run_synth(SynthArgs args, std::uint64_t seed) {
  if (args.label >= 0) args.spec.label = args.label;
  args.spec.actor = !args.no_actor;
  write_sequence(synth_sequence(args.spec, seed), fs::path(args.out));
  return kExitOk;
}

// -------------------------------------------------------------- inspect

int run_inspect(const std::string& path, bool show_config, const ConfigFlags& flags,
                std::uint64_t seed) {
  if (show_config) {
    std::cout << to_json(flags.build(seed)) << "\n";
    if (path.empty()) return kExitOk;
  }
  if (path.empty()) {
    std::cerr << "error: inspect needs a file or --config\n";
    return kExitUsage;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  char magic[5] = {};
  in.read(magic, 5);
  in.seekg(0);
  nlohmann::json doc;
  if (std::equal(magic, magic + 5, kCheckpointMagic)) {
    auto ck = load_model(in);
    doc["kind"] = "checkpoint";
    doc["grid"] = {ck.grid_width, ck.grid_height};
    doc["feature_dim"] = ck.model.feature_dim();
    doc["lr"] = ck.lr;
    doc["config"] = nlohmann::json::parse(to_json(ck.config));
    std::size_t count = 0;
    for (const Param* p : ck.model.parameters()) count += p->value.size();
    doc["parameters"] = count;
  } else {
    SequenceReader reader{fs::path(path)};
    const auto& h = reader.header();
    std::size_t frames = 0, proposals = 0, gt = 0;
    while (auto f = reader.next()) {
      ++frames;
      proposals += f->proposals.size();
      gt += f->gt_boxes.size();
    }
    doc["kind"] = "sequence";
    doc["video_id"] = h.video_id;
    doc["label"] = h.label ? nlohmann::json(*h.label) : nlohmann::json(nullptr);
    doc["shape"] = {h.width, h.height, h.channels};
    doc["frames"] = frames;
    doc["proposals"] = proposals;
    doc["gt_boxes"] = gt;
  }
  std::cout << doc.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised streaming actor localization"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random draw")->capture_default_str();

  ConfigFlags train_flags, localize_flags, inspect_flags;

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "single pass of streaming training");
  train_cmd->add_option("files", train.files, "PSVID sequences");
  train_cmd->add_option("--manifest", train.manifest, "file listing one sequence per line");
  train_cmd->add_option("--out", train.out, "checkpoint to write");
  train_cmd->add_option("--metrics", train.metrics, "per-step JSONL loss log");
  train_cmd->add_option("--train-domain", train.train_domain, "manifest of training videos");
  train_cmd->add_option("--eval-domain", train.eval_domain,
                        "manifest localized with the trained model, no further updates");
  train_cmd->add_option("--eval-out", train.eval_out, "JSONL output for --eval-domain");
  train_cmd->add_option("--jobs", train.jobs, "worker threads for --eval-domain");
  train_cmd->add_option("--seed", seed, "seed for every random draw");
  train_flags.attach(train_cmd);

  LocalizeArgs localize;
  auto* localize_cmd = app.add_subcommand("localize", "emit boxes per frame as JSONL");
  localize_cmd->add_option("files", localize.files, "PSVID sequences");
  localize_cmd->add_option("--checkpoint", localize.checkpoint, "trained model")->required();
  localize_cmd->add_option("--manifest", localize.manifest, "file listing one sequence per line");
  localize_cmd->add_option("--out", localize.out, "output JSONL (default stdout)");
  localize_cmd->add_flag("--continual", localize.continual,
                         "keep learning while localizing (default: frozen parameters)");
  localize_cmd->add_option("--jobs", localize.jobs, "worker threads");
  localize_cmd->add_option("--seed", seed, "seed for every random draw");
  localize_flags.add_localization(localize_cmd);

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "localization and recognition metrics");
  eval_cmd->add_option("--predictions", eval.predictions, "localize output")->required();
  eval_cmd->add_option("--ground-truth", eval.ground_truth, "PSVID sequences with annotations");
  eval_cmd->add_option("--ground-truth-manifest", eval.ground_truth_manifest,
                       "file listing annotated sequences");
  eval_cmd->add_option("--k", eval.k, "cluster count (default: number of classes)");
  eval_cmd->add_flag("--k-scan", eval.k_scan, "scan k from the class count to 3x it");
  eval_cmd->add_option("--rank-by", eval.rank_by, "ranking key for average precision")
      ->check(CLI::IsMember({"margin", "tube-iou"}));
  eval_cmd->add_option("--out", eval.out, "report JSON (default stdout)");
  eval_cmd->add_option("--csv", eval.csv, "per-video CSV rows");
  eval_cmd->add_option("--jobs", eval.jobs, "worker threads");
  eval_cmd->add_option("--seed", seed, "seed for every random draw");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic actor sequence");
  synth_cmd->add_option("--out", synth.out, "PSVID file to write")->required();
  synth_cmd->add_option("--width", synth.spec.width)->capture_default_str();
  synth_cmd->add_option("--height", synth.spec.height)->capture_default_str();
  synth_cmd->add_option("--channels", synth.spec.channels)->capture_default_str();
  synth_cmd->add_option("--frames", synth.spec.frames)->capture_default_str();
  synth_cmd->add_option("--distractors", synth.spec.distractors)->capture_default_str();
  synth_cmd->add_option("--video-id", synth.spec.video_id)->capture_default_str();
  synth_cmd->add_option("--label", synth.label, "class id, -1 for none");
  synth_cmd->add_flag("--no-actor", synth.no_actor, "background only");
  synth_cmd->add_option("--seed", seed, "seed for every random draw");

  std::string inspect_path;
  bool inspect_config = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a sequence or checkpoint");
  inspect_cmd->add_option("file", inspect_path, "PSVID sequence or PSTRM checkpoint");
  inspect_cmd->add_flag("--show-config", inspect_config, "print the effective run config");
  inspect_cmd->add_option("--seed", seed, "seed for every random draw");
  inspect_flags.attach(inspect_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train, train_flags, seed);
    if (*localize_cmd) return run_localize(localize, localize_flags, seed);
    if (*eval_cmd) return run_evaluate(eval, seed);
    if (*synth_cmd) return run_synth(synth, seed);
    if (*inspect_cmd) return run_inspect(inspect_path, inspect_config, inspect_flags, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
