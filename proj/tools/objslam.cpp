// objslam command-line driver.
//
// Exit codes: 0 success, 2 unreadable or malformed input, 3 optimizer divergence,
// 4 configuration error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "objslam/category_model.hpp"
#include "objslam/error.hpp"
#include "objslam/eval.hpp"
#include "objslam/graph.hpp"
#include "objslam/pipeline.hpp"
#include "objslam/retrieval.hpp"
#include "objslam/sim.hpp"
#include "objslam/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace objslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitConfig = 4;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read " + path);
  return in;
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  out << content;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "cannot create " + dir);
  return p;
}

struct BuildModelArgs {
  std::string collection;
  int synthesize = 250;
  std::uint64_t seed = 1;
  int basis = 0;
  double floor = 0.95;
  std::string out = "model_out";
};

int cmd_build_model(const BuildModelArgs& a) {
  const fs::path out = prepare_out(a.out);
  std::vector<KeypointSet3D> instances;
  std::vector<std::string> labels;
  if (!a.collection.empty()) {
    auto in = open_in(a.collection);
    instances = read_keypoint_collection(in, &labels);
  } else {
    instances = synthesize_chairs(a.synthesize, a.seed);
    labels = chair_keypoint_labels();
    std::ostringstream col;
    write_keypoint_collection(col, instances, labels);
    write_file(out / "collection.txt", col.str());
  }
  ModelBuildOptions opts;
  if (a.basis > 0) opts.basis_size = a.basis;
  opts.explained_variance_floor = a.floor;
  CategoryModel model = build_category_model(instances, opts);
  if (model.labels.empty()) model.labels = labels;
  std::ostringstream m;
  write_model(m, model);
  write_file(out / "model.txt", m.str());
  std::ostringstream idx;
  write_index(idx, InstanceIndex::build(model, instances, a.collection.empty() ? "synthetic" : a.collection));
  write_file(out / "index.txt", idx.str());
  std::cout << "model: K=" << model.num_keypoints << " B=" << model.basis_size()
            << " explained=" << format_double(model.explained_variance_ratio()) << " from "
            << instances.size() << " instances -> " << (out / "model.txt").string() << '\n';
  return kExitOk;
}

struct GenArgs {
  std::string model;
  std::string preset = "seq1";
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "scenario_out";
};

int cmd_gen_scenario(const GenArgs& a) {
  const CategoryModel model = load_model(a.model);
  ScenarioConfig cfg = a.config.empty() ? scenario_preset(a.preset)
                                        : config_from_json(read_json(a.config));
  if (a.seed_set) cfg.seed = a.seed;
  const Scenario s = generate(cfg, model);
  const fs::path out = prepare_out(a.out);
  write_file(out / "scenario.json", scenario_to_json(s).dump(1) + "\n");
  write_file(out / "measurements.json", measurements_to_json(s).dump(1) + "\n");
  int obs = 0;
  for (const auto& f : s.frames) obs += static_cast<int>(f.observations.size());
  std::cout << "scenario " << cfg.name << ": " << s.poses.size() << " poses, " << s.objects.size()
            << " objects, " << obs << " observations -> " << out.string() << '\n';
  return kExitOk;
}

struct RunArgs {
  std::string scenario;
  std::string model;
  std::string mode = "batch";
  std::string olc = "on";
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "run_out";
};

PipelineConfig load_pipeline_config(const std::string& path) {
  if (path.empty()) return {};
  json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return pipeline_config_from_json(j);
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw Error(ErrorCode::ConfigError, "--olc takes on or off");
}

void write_outputs(const fs::path& out, const PipelineResult& result, const RunReport& report,
                   const GroundTruth* truth, const json& config) {
  std::ostringstream rep;
  write_report(rep, report);
  write_file(out / "report.txt", rep.str());
  json est = estimates_to_json(result);
  est["config"] = config;
  write_file(out / "estimates.json", est.dump(1) + "\n");
  std::ostringstream log;
  write_assoc_log(log, result.assoc_log);
  write_file(out / "assoc.log", log.str());
  std::ostringstream svg;
  write_plot_svg(svg, result, truth);
  write_file(out / "plot.svg", svg.str());
}

int cmd_run(const RunArgs& a) {
  const RunMode mode = run_mode_from_string(a.mode);
  const bool olc = parse_on_off(a.olc);
  const PipelineConfig cfg = load_pipeline_config(a.config);
  const json doc = read_json(a.scenario);
  const Measurements m = measurements_from_json(doc);
  const CategoryModel model = load_model(a.model);

  const auto start = std::chrono::steady_clock::now();
  const PipelineResult result = run_pipeline(m, model, mode, olc, cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::optional<GroundTruth> truth;
  if (has_ground_truth(doc)) truth = ground_truth_from_json(doc);
  const json config = pipeline_config_to_json(cfg);
  RunReport report = evaluate(result, truth ? &*truth : nullptr, m, config);
  report.seconds = seconds;

  const fs::path out = prepare_out(a.out);
  write_outputs(out, result, report, truth ? &*truth : nullptr, config);
  std::cout << "run " << m.name << " mode=" << to_string(mode) << " olc=" << (olc ? "on" : "off")
            << " objects=" << result.objects.size();
  if (report.objects) std::cout << " avg_err=" << format_double(report.objects->average);
  if (report.drift) {
    std::cout << " drift_x=" << format_double(report.drift->x)
              << " drift_z=" << format_double(report.drift->z);
  }
  std::cout << " time=" << seconds << "s -> " << out.string() << '\n';
  return kExitOk;
}

struct RetrieveArgs {
  std::string index;
  std::string model;
  std::string collection;
  std::string query;
  std::string estimates;
  int object = -1;
  int k = 5;
  std::string metric = "euclidean";
};

int cmd_retrieve(const RetrieveArgs& a) {
  InstanceIndex index;
  if (!a.index.empty()) {
    auto in = open_in(a.index);
    index = read_index(in);
  } else {
    if (a.model.empty() || a.collection.empty()) {
      throw Error(ErrorCode::ConfigError, "need --index or both --model and --collection");
    }
    const CategoryModel model = load_model(a.model);
    auto in = open_in(a.collection);
    const auto instances = read_keypoint_collection(in);
    index = InstanceIndex::build(model, instances, a.collection);
  }
  RetrievalMetric metric;
  if (a.metric == "euclidean") {
    metric = RetrievalMetric::Euclidean;
  } else if (a.metric == "whitened") {
    metric = RetrievalMetric::Whitened;
  } else {
    throw Error(ErrorCode::ConfigError, "--metric takes euclidean or whitened");
  }

  std::vector<std::pair<std::string, ShapeParams>> queries;
  if (!a.query.empty()) {
    std::string text = a.query;
    std::replace(text.begin(), text.end(), ',', ' ');
    ShapeParams q;
    const auto tok = split_tokens(text);
    q.lambda.resize(static_cast<Eigen::Index>(tok.size()));
    for (std::size_t i = 0; i < tok.size(); ++i) q.lambda[static_cast<Eigen::Index>(i)] = parse_double(tok[i]);
    queries.emplace_back("query", q);
  } else if (!a.estimates.empty()) {
    const PipelineResult r = estimates_from_json(read_json(a.estimates));
    for (const auto& [id, s] : r.shapes) {
      if (a.object >= 0 && id != a.object) continue;
      queries.emplace_back("object " + std::to_string(id), s);
    }
  } else {
    throw Error(ErrorCode::ConfigError, "need --query or --estimates");
  }
  for (const auto& [name, q] : queries) {
    std::cout << name << '\n';
    const auto hits = knn_retrieve(index, q, a.k, metric);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      std::cout << "  " << i + 1 << ' ' << hits[i].id << ' ' << format_double(hits[i].distance)
                << '\n';
    }
  }
  return kExitOk;
}

struct EvalArgs {
  std::string scenario;
  std::string estimates;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const json doc = read_json(a.scenario);
  const Measurements m = measurements_from_json(doc);
  const GroundTruth truth = ground_truth_from_json(doc);
  const json est = read_json(a.estimates);
  const PipelineResult result = estimates_from_json(est);
  const RunReport report = evaluate(result, &truth, m, est.value("config", json::object()));
  std::ostringstream rep;
  write_report(rep, report);
  if (a.out.empty()) {
    std::cout << rep.str();
  } else {
    const fs::path out = prepare_out(a.out);
    write_file(out / "report.txt", rep.str());
    std::ostringstream svg;
    write_plot_svg(svg, result, &truth);
    write_file(out / "plot.svg", svg.str());
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ParseError:
    case ErrorCode::InsufficientInstances:
    case ErrorCode::InconsistentK:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::MissingCorrespondence:
    case ErrorCode::EmptyIndex:
      return kExitBadInput;
    case ErrorCode::Diverged:
    case ErrorCode::GaugeUnfixed:
    case ErrorCode::DisconnectedGraph:
    case ErrorCode::AngleAtPi:
      return kExitDiverged;
    default:
      return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-level object SLAM on synthetic scenes"};
  app.require_subcommand(1);

  BuildModelArgs bm;
  auto* build = app.add_subcommand("build-model", "PCA shape model from a keypoint collection");
  build->add_option("--collection", bm.collection, "Keypoint collection (default: synthesize)");
  build->add_option("--synthesize", bm.synthesize, "Synthetic instances when no collection");
  build->add_option("--seed", bm.seed, "Seed for the synthetic collection");
  build->add_option("--basis", bm.basis, "Explicit basis size B");
  build->add_option("--variance-floor", bm.floor, "Explained-variance floor for B");
  build->add_option("--out", bm.out, "Output directory");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-scenario", "Generate a synthetic scenario");
  gen_cmd->add_option("--model", gen.model, "Category model file")->required();
  gen_cmd->add_option("--preset", gen.preset, "seq1, seq2, seq3 or seq4");
  gen_cmd->add_option("--config", gen.config, "Scenario config (JSON), overrides --preset");
  auto* seed_opt = gen_cmd->add_option("--seed", gen.seed, "Scenario seed");
  gen_cmd->add_option("--out", gen.out, "Output directory");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline on a scenario");
  run_cmd->add_option("--scenario", run.scenario, "Scenario or measurement file")->required();
  run_cmd->add_option("--model", run.model, "Category model file")->required();
  run_cmd->add_option("--mode", run.mode, "odo, batch or inc");
  run_cmd->add_option("--olc", run.olc, "Object loop closure: on or off");
  run_cmd->add_option("--config", run.config, "Pipeline config (JSON)");
  run_cmd->add_option("--seed", run.seed, "Accepted for interface symmetry; runs are deterministic");
  run_cmd->add_option("--out", run.out, "Output directory");

  RetrieveArgs ret;
  auto* ret_cmd = app.add_subcommand("retrieve", "Nearest training instances for shape parameters");
  ret_cmd->add_option("--index", ret.index, "Index file");
  ret_cmd->add_option("--model", ret.model, "Category model (with --collection)");
  ret_cmd->add_option("--collection", ret.collection, "Keypoint collection (with --model)");
  ret_cmd->add_option("--query", ret.query, "Comma-separated shape coefficients");
  ret_cmd->add_option("--estimates", ret.estimates, "estimates.json from a run");
  ret_cmd->add_option("--object", ret.object, "Only this object id from --estimates");
  ret_cmd->add_option("--k", ret.k, "Neighbors to report");
  ret_cmd->add_option("--metric", ret.metric, "euclidean or whitened");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Report for saved estimates against ground truth");
  eval_cmd->add_option("--scenario", ev.scenario, "Scenario file with ground truth")->required();
  eval_cmd->add_option("--estimates", ev.estimates, "estimates.json from a run")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory (default: print)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*build) return cmd_build_model(bm);
    if (*gen_cmd) {
      gen.seed_set = seed_opt->count() > 0;
      return cmd_gen_scenario(gen);
    }
    if (*run_cmd) return cmd_run(run);
    if (*ret_cmd) return cmd_retrieve(ret);
    if (*eval_cmd) return cmd_eval(ev);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  return kExitOk;
}
