// csic: generate channel data, train CsiNet-style models, compress, evaluate,
// benchmark and sweep. Every command writes <out-dir>/<command>.manifest.json.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "csic/byte_io.hpp"
#include "csic/channel.hpp"
#include "csic/compressor.hpp"
#include "csic/engine.hpp"
#include "csic/error.hpp"
#include "csic/metrics.hpp"
#include "csic/model.hpp"
#include "csic/model_io.hpp"
#include "csic/pipeline.hpp"
#include "csic/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace csic;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitInvariant = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kFormat:
    case ErrorKind::kIo: return kExitFormat;
    case ErrorKind::kInvariant: return kExitInvariant;
  }
  return kExitInvariant;
}

struct Globals {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string profile_name = "desk";
  Profile profile = Profile::kDesk;
  std::vector<std::string> argv;
};

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out_dir) / name; }

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void write_manifest(const Globals& g, const std::string& command, const json& params,
                    const json& outputs) {
  json m;
  m["command"] = command;
  m["argv"] = g.argv;
  m["seed"] = g.seed;
  m["profile"] = g.profile_name;
  m["out_dir"] = g.out_dir;
  m["params"] = params;
  m["outputs"] = outputs;
  write_text(out_path(g, command + ".manifest.json"), m.dump(2) + "\n");
}

json quality_json(const QualityReport& q) {
  return {{"nmse_db", q.nmse_db}, {"rho", q.rho}, {"samples", q.samples}, {"excluded", q.excluded}};
}

std::string default_or(const std::string& value, const fs::path& fallback) {
  return value.empty() ? fallback.string() : value;
}

// ------------------------------------------------------------- gen-data ---

struct GenDataArgs {
  std::size_t train = 0;
  std::size_t test = 0;
};

void gen_data(const Globals& g, const GenDataArgs& a) {
  const ProfileDefaults d = profile_defaults(g.profile);
  const std::size_t train = a.train ? a.train : d.train_samples;
  const std::size_t test = a.test ? a.test : d.test_samples;
  fs::create_directories(g.out_dir);
  json outputs = json::array();
  for (const Environment env : {Environment::kIndoor, Environment::kOutdoor}) {
    const ScenarioConfig cfg = ScenarioConfig::preset(env, g.profile, scenario_seed(g.seed, env));
    const DataSplit split = generate_split(cfg, train, test);
    const std::string stem = to_string(env);
    for (const auto& [suffix, data] : {std::pair{"_train.csid", &split.train}, std::pair{"_test.csid", &split.test}}) {
      const fs::path path = out_path(g, stem + suffix);
      export_dataset(*data, path);
      outputs.push_back({{"path", path.string()}, {"samples", data->count()}});
      std::printf("%s: %zu samples, %dx%d\n", path.c_str(), data->count(), data->rows, data->antennas);
    }
  }
  write_manifest(g, "gen-data", {{"train_samples", train}, {"test_samples", test}}, outputs);
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
  std::string data;
  double gamma = 0.25;
  int epochs = 0;
  int batch = 64;
  double lr = 1e-3;
  std::string output;
};

void train_cmd(const Globals& g, const TrainArgs& a) {
  const std::string data_path = default_or(a.data, out_path(g, "indoor_train.csid"));
  const Dataset data = import_dataset(data_path);
  ModelSpec spec;
  spec.rows = data.rows;
  spec.antennas = data.antennas;
  spec.gamma = a.gamma;
  spec.seed = g.seed;
  spec.validate();
  Model model = build_model(spec);

  TrainConfig cfg;
  cfg.epochs = a.epochs ? a.epochs : profile_defaults(g.profile).epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = g.seed;
  cfg.on_epoch = [&](int epoch, double loss) {
    std::printf("epoch %d/%d loss %.6g\n", epoch, cfg.epochs, loss);
    std::fflush(stdout);
  };
  train(model, data, cfg);

  const int m = spec.codeword_size();
  const fs::path model_path = default_or(a.output, out_path(g, "csinet_m" + std::to_string(m) + ".csim"));
  fs::create_directories(model_path.parent_path().empty() ? "." : model_path.parent_path());
  fs::create_directories(g.out_dir);
  const std::size_t bytes = save_model(model, model_path);
  fs::path loss_path = model_path;
  loss_path.replace_extension(".loss.csv");
  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < model.loss_history.size(); ++i) {
    char row[64];
    std::snprintf(row, sizeof row, "%zu,%.9g\n", i + 1, model.loss_history[i]);
    csv += row;
  }
  write_text(loss_path, csv);
  std::printf("wrote %s (%zu bytes, M=%d)\n", model_path.c_str(), bytes, m);
  write_manifest(g, "train",
                 {{"data", data_path}, {"gamma", a.gamma}, {"epochs", cfg.epochs},
                  {"batch", cfg.batch_size}, {"lr", cfg.learning_rate}},
                 {{"model", model_path.string()}, {"size_bytes", bytes}, {"loss_csv", loss_path.string()}});
}

// ------------------------------------------------------------- compress ---

struct CompressArgs {
  std::string technique;
  std::string model;
  std::string output;
  std::string data;
  double ratio = 0.5;
  std::uint32_t k = 32;
  std::string init = "kmeanspp";
  std::string level = "dynamic-i8";
  int fine_tune_epochs = -1;
  int batch = 64;
  double lr = 1e-4;
};

void compress_cmd(const Globals& g, const CompressArgs& a) {
  const Model model = load_model(a.model);
  const auto level = parse_quant_level(a.level);
  if (!level) fail(ErrorKind::kConfig, "unknown quantization level '" + a.level + "'");
  const auto init = parse_cluster_init(a.init);
  if (!init) fail(ErrorKind::kConfig, "unknown cluster init '" + a.init + "'");

  FineTuneConfig tune;
  tune.epochs = a.fine_tune_epochs >= 0 ? a.fine_tune_epochs
                : model.epochs_seen > 0 ? std::max(1, model.epochs_seen / 5)
                                        : profile_defaults(g.profile).fine_tune_epochs;
  tune.batch_size = a.batch;
  tune.learning_rate = a.lr;
  tune.seed = g.seed;

  PruneConfig prune;
  prune.ratio = a.ratio;
  prune.fine_tune_epochs = tune.epochs;
  ClusterConfig cluster;
  cluster.k = a.k;
  cluster.init = *init;
  cluster.seed = g.seed;
  cluster.fine_tune_epochs = tune.epochs;
  if (a.technique == "prune" || a.technique == "prune-quantize") prune.validate();
  if (a.technique == "cluster" || a.technique == "cluster-quantize") cluster.validate();

  const bool needs_data = a.technique != "quantize" && tune.epochs > 0;
  const std::string data_path = default_or(a.data, out_path(g, "indoor_train.csid"));
  Dataset data;
  if (needs_data) data = import_dataset(data_path);

  Model out;
  if (a.technique == "prune") {
    out = prune_magnitude(model, prune);
    if (tune.epochs > 0) out = fine_tune(out, data, tune);
  } else if (a.technique == "quantize") {
    out = quantize(model, *level);
  } else if (a.technique == "cluster") {
    out = cluster_weights(model, cluster);
    if (tune.epochs > 0) out = fine_tune(out, data, tune);
  } else if (a.technique == "prune-quantize") {
    out = prune_quantize(model, data, prune, *level, tune);
  } else {
    out = cluster_quantize(model, data, cluster, *level, tune);
  }

  fs::path dst = a.output;
  if (dst.empty()) {
    dst = out_path(g, fs::path(a.model).stem().string() + "_" + a.technique + ".csim");
  }
  fs::create_directories(g.out_dir);
  const std::size_t before = size_of(model);
  const std::size_t after = save_model(out, dst);
  std::printf("%s: %zu -> %zu bytes (%.1f%% smaller), sparsity %.3f\n", dst.c_str(), before, after,
              100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before)),
              achieved_sparsity(out));
  write_manifest(g, "compress",
                 {{"technique", a.technique}, {"model", a.model}, {"ratio", a.ratio}, {"k", a.k},
                  {"init", a.init}, {"level", a.level}, {"fine_tune_epochs", tune.epochs},
                  {"batch", tune.batch_size}, {"lr", tune.learning_rate},
                  {"data", needs_data ? json(data_path) : json(nullptr)}},
                 {{"model", dst.string()}, {"size_bytes", after}, {"original_bytes", before}});
}

// ----------------------------------------------------------------- eval ---

struct EvalArgs {
  std::string model;
  std::vector<std::string> data;
  int batch = 256;
  bool force_dense = false;
};

void eval_cmd(const Globals& g, const EvalArgs& a) {
  const Model model = load_model(a.model);
  std::vector<std::string> paths = a.data;
  if (paths.empty()) {
    for (const char* name : {"indoor_test.csid", "outdoor_test.csid"}) {
      if (fs::exists(out_path(g, name))) paths.push_back(out_path(g, name).string());
    }
    if (paths.empty()) fail(ErrorKind::kConfig, "no --data given and no test sets in " + g.out_dir);
  }
  const ExecutionPlan p = plan(model, a.force_dense);
  json results = json::array();
  for (const auto& path : paths) {
    const Dataset data = import_dataset(path);
    const QualityReport q = evaluate(p, data, a.batch);
    std::printf("%s: NMSE %.4f dB, rho %.6f over %zu samples (%zu excluded)\n", path.c_str(), q.nmse_db,
                q.rho, q.samples, q.excluded);
    json r = quality_json(q);
    r["data"] = path;
    results.push_back(r);
  }
  fs::create_directories(g.out_dir);
  write_text(out_path(g, "eval.json"), results.dump(2) + "\n");
  write_manifest(g, "eval", {{"model", a.model}, {"data", paths}, {"batch", a.batch}, {"force_dense", a.force_dense}},
                 {{"report", out_path(g, "eval.json").string()}, {"results", results}});
}

// ---------------------------------------------------------------- bench ---

struct BenchArgs {
  std::vector<std::string> models;
  std::string indoor;
  std::string outdoor;
  int warmup = 10;
  int runs = 100;
  int batch = 1;
  bool force_dense = false;
  std::string report;
};

std::optional<Dataset> optional_dataset(const std::string& given, const fs::path& fallback) {
  if (!given.empty()) return import_dataset(given);
  if (fs::exists(fallback)) return import_dataset(fallback);
  return std::nullopt;
}

void bench_cmd(const Globals& g, const BenchArgs& a) {
  const auto indoor = optional_dataset(a.indoor, out_path(g, "indoor_test.csid"));
  const auto outdoor = optional_dataset(a.outdoor, out_path(g, "outdoor_test.csid"));
  if (!indoor && !outdoor) fail(ErrorKind::kConfig, "bench needs at least one test set");
  if (a.batch < 1) fail(ErrorKind::kConfig, "--batch must be >= 1");
  const Dataset& timing_source = indoor ? *indoor : *outdoor;
  const Tensor input = timing_source.batch(0, std::min<std::size_t>(a.batch, timing_source.count()));

  std::vector<BenchReport> reports;
  for (const auto& path : a.models) {
    const Model model = load_model(path);
    const ExecutionPlan p = plan(model, a.force_dense);
    BenchReport r;
    r.model = fs::path(path).stem().string();
    r.gamma = model.spec.gamma;
    r.technique = technique_label(model);
    r.size_bytes = fs::file_size(path);
    r.timing = bench_inference(p, input, a.warmup, a.runs);
    if (indoor) r.indoor = evaluate(p, *indoor);
    if (outdoor) r.outdoor = evaluate(p, *outdoor);
    std::printf("%s: %zu bytes, median %.2f us (p5 %.2f, p95 %.2f)\n", r.model.c_str(), r.size_bytes,
                r.timing.median_us, r.timing.p5_us, r.timing.p95_us);
    reports.push_back(std::move(r));
  }
  const fs::path stem = default_or(a.report, out_path(g, "bench"));
  fs::create_directories(g.out_dir);
  emit_report(reports, stem);
  fs::path csv = stem, js = stem;
  write_manifest(g, "bench",
                 {{"models", a.models}, {"indoor", indoor ? json(default_or(a.indoor, out_path(g, "indoor_test.csid"))) : json(nullptr)},
                  {"outdoor", outdoor ? json(default_or(a.outdoor, out_path(g, "outdoor_test.csid"))) : json(nullptr)},
                  {"warmup", a.warmup}, {"runs", a.runs}, {"batch", a.batch}, {"force_dense", a.force_dense}},
                 {{"csv", csv.replace_extension(".csv").string()}, {"json", js.replace_extension(".json").string()}});
}

// ---------------------------------------------------------------- sweep ---

struct SweepArgs {
  std::string model;
  std::string data;
  std::string indoor;
  std::string outdoor;
  std::vector<double> sparsities{0.0, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::string> levels{"f32", "f16", "dynamic-i8"};
  int fine_tune_epochs = -1;
  double lr = 1e-4;
  int warmup = 10;
  int runs = 100;
  int batch = 1;
  bool force_dense = false;
  std::string report;
};

void sweep_cmd(const Globals& g, const SweepArgs& a) {
  const Model model = load_model(a.model);
  const std::string data_path = default_or(a.data, out_path(g, "indoor_train.csid"));
  const Dataset train_data = import_dataset(data_path);
  const auto indoor = optional_dataset(a.indoor, out_path(g, "indoor_test.csid"));
  if (!indoor) fail(ErrorKind::kConfig, "sweep needs an indoor test set (--indoor)");
  const auto outdoor = optional_dataset(a.outdoor, out_path(g, "outdoor_test.csid"));

  SweepConfig cfg;
  cfg.sparsities = a.sparsities;
  cfg.levels.clear();
  for (const auto& name : a.levels) {
    const auto level = parse_sweep_level(name);
    if (!level) fail(ErrorKind::kConfig, "unknown sweep level '" + name + "'");
    cfg.levels.push_back(*level);
  }
  cfg.tune.epochs = a.fine_tune_epochs >= 0 ? a.fine_tune_epochs
                    : model.epochs_seen > 0 ? std::max(1, model.epochs_seen / 5)
                                            : profile_defaults(g.profile).fine_tune_epochs;
  cfg.tune.learning_rate = a.lr;
  cfg.tune.seed = g.seed;
  cfg.warmup = a.warmup;
  cfg.runs = a.runs;
  cfg.bench_batch = a.batch;
  cfg.force_dense = a.force_dense;

  const auto cells = run_sweep(model, train_data, *indoor, outdoor ? &*outdoor : nullptr, cfg);
  std::vector<BenchReport> reports;
  for (const auto& c : cells) {
    std::printf("sparsity %.2f %-10s %8zu bytes  NMSE %.3f dB\n", c.sparsity, to_string(c.level),
                c.report.size_bytes, c.report.indoor->nmse_db);
    reports.push_back(c.report);
  }
  const fs::path stem = default_or(a.report, out_path(g, "sweep"));
  fs::create_directories(g.out_dir);
  emit_report(reports, stem);
  fs::path grid = stem;
  grid.replace_filename(stem.filename().string() + "_grid.csv");
  write_text(grid, sweep_grid_csv(cells));
  write_manifest(g, "sweep",
                 {{"model", a.model}, {"data", data_path}, {"sparsities", a.sparsities}, {"levels", a.levels},
                  {"fine_tune_epochs", cfg.tune.epochs}, {"lr", cfg.tune.learning_rate},
                  {"warmup", a.warmup}, {"runs", a.runs}, {"batch", a.batch}, {"force_dense", a.force_dense}},
                 {{"report_stem", stem.string()}, {"grid_csv", grid.string()}, {"rows", cells.size()}});
}

// ----------------------------------------------------------------- info ---

void info_cmd(const Globals& g, const std::string& path) {
  const Model model = load_model(path);
  const auto& s = model.spec;
  std::printf("%s\n", path.c_str());
  std::printf("  input %dx%dx%d, N=%d, M=%d (gamma %.6g), seed %llu\n", s.planes, s.rows, s.antennas,
              s.feedback_size(), s.codeword_size(), s.gamma, static_cast<unsigned long long>(s.seed));
  std::printf("  %zu layers (%zu encoder), %zu parameters, %d epochs trained\n", model.layers.size(),
              model.encoder_layers, model.parameter_count(), model.epochs_seen);
  std::printf("  technique %s, sparsity %.4f, size %zu bytes\n", technique_label(model).c_str(),
              achieved_sparsity(model), size_of(model));
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (!l.has_weights()) {
      std::printf("  %2zu %-9s\n", i, to_string(l.kind));
      layers.push_back({{"kind", to_string(l.kind)}});
      continue;
    }
    std::printf("  %2zu %-9s %-14s %-14s %8zu bytes, %zu zeros\n", i, to_string(l.kind),
                shape_string(l.weight_shape).c_str(), to_string(l.weights.tag()), l.weights.payload_bytes(),
                l.weights.zero_count());
    layers.push_back({{"kind", to_string(l.kind)}, {"shape", l.weight_shape}, {"store", to_string(l.weights.tag())},
                      {"payload_bytes", l.weights.payload_bytes()}, {"zeros", l.weights.zero_count()}});
  }
  fs::create_directories(g.out_dir);
  write_manifest(g, "info", {{"model", path}},
                 {{"size_bytes", size_of(model)}, {"parameters", model.parameter_count()}, {"layers", layers}});
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  g.argv.assign(argv, argv + argc);

  CLI::App app{"CSI feedback autoencoder compression toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifests");
  app.add_option("--profile", g.profile_name, "Problem size")->check(CLI::IsMember({"desk", "full"}));

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate indoor and outdoor train/test datasets");
  gen_cmd->add_option("--train-samples", gen.train, "Training samples per environment (0: profile default)");
  gen_cmd->add_option("--test-samples", gen.test, "Test samples per environment (0: profile default)");

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train an encoder/decoder pair");
  train_sub->add_option("--data", tr.data, "Training dataset (default <out-dir>/indoor_train.csid)");
  train_sub->add_option("--gamma", tr.gamma, "Compression ratio M/N")->check(CLI::Range(0.0, 1.0));
  train_sub->add_option("--epochs", tr.epochs, "Epochs (0: profile default)")->check(CLI::NonNegativeNumber);
  train_sub->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train_sub->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_sub->add_option("-o,--output", tr.output, "Model file");

  CompressArgs cp;
  auto* compress_sub = app.add_subcommand("compress", "Prune, quantize or cluster a trained model");
  compress_sub->add_option("technique", cp.technique, "prune | quantize | cluster | prune-quantize | cluster-quantize")
      ->required()
      ->check(CLI::IsMember({"prune", "quantize", "cluster", "prune-quantize", "cluster-quantize"}));
  compress_sub->add_option("-m,--model", cp.model, "Input model")->required()->check(CLI::ExistingFile);
  compress_sub->add_option("-o,--output", cp.output, "Output model");
  compress_sub->add_option("--data", cp.data, "Fine-tuning dataset (default <out-dir>/indoor_train.csid)");
  compress_sub->add_option("--ratio", cp.ratio, "Pruning sparsity in [0,1)");
  compress_sub->add_option("--k", cp.k, "Cluster count");
  compress_sub->add_option("--init", cp.init, "kmeanspp | linear | random | density");
  compress_sub->add_option("--level", cp.level, "dynamic-i8 | f16");
  compress_sub->add_option("--fine-tune-epochs", cp.fine_tune_epochs, "Fine-tune epochs (-1: 20% of training)");
  compress_sub->add_option("--batch", cp.batch, "Fine-tune batch size")->check(CLI::PositiveNumber);
  compress_sub->add_option("--lr", cp.lr, "Fine-tune learning rate")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "NMSE and cosine similarity on test datasets");
  eval_sub->add_option("-m,--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
  eval_sub->add_option("--data", ev.data, "Datasets (default: test sets in <out-dir>)");
  eval_sub->add_option("--batch", ev.batch, "Evaluation batch size")->check(CLI::PositiveNumber);
  eval_sub->add_flag("--force-dense", ev.force_dense, "Run every layer with dense kernels");

  BenchArgs bn;
  auto* bench_sub = app.add_subcommand("bench", "Size, latency and quality report");
  bench_sub->add_option("-m,--model", bn.models, "Model files")->required()->check(CLI::ExistingFile);
  bench_sub->add_option("--indoor", bn.indoor, "Indoor test set");
  bench_sub->add_option("--outdoor", bn.outdoor, "Outdoor test set");
  bench_sub->add_option("--warmup", bn.warmup, "Unmeasured runs")->check(CLI::NonNegativeNumber);
  bench_sub->add_option("--runs", bn.runs, "Measured runs (>= 10)");
  bench_sub->add_option("--batch", bn.batch, "Samples per timed inference");
  bench_sub->add_flag("--force-dense", bn.force_dense, "Disable sparse and gather kernels");
  bench_sub->add_option("--report", bn.report, "Report stem (default <out-dir>/bench)");

  SweepArgs sw;
  auto* sweep_sub = app.add_subcommand("sweep", "Sparsity x quantization grid");
  sweep_sub->add_option("-m,--model", sw.model, "Trained f32 model")->required()->check(CLI::ExistingFile);
  sweep_sub->add_option("--data", sw.data, "Fine-tuning dataset");
  sweep_sub->add_option("--indoor", sw.indoor, "Indoor test set");
  sweep_sub->add_option("--outdoor", sw.outdoor, "Outdoor test set");
  sweep_sub->add_option("--sparsities", sw.sparsities, "Sparsity grid")->delimiter(',');
  sweep_sub->add_option("--levels", sw.levels, "Precision grid: f32, f16, dynamic-i8")->delimiter(',');
  sweep_sub->add_option("--fine-tune-epochs", sw.fine_tune_epochs, "Fine-tune epochs per sparsity (-1: 20% of training)");
  sweep_sub->add_option("--lr", sw.lr, "Fine-tune learning rate")->check(CLI::PositiveNumber);
  sweep_sub->add_option("--warmup", sw.warmup, "Unmeasured runs")->check(CLI::NonNegativeNumber);
  sweep_sub->add_option("--runs", sw.runs, "Measured runs (>= 10)");
  sweep_sub->add_option("--batch", sw.batch, "Samples per timed inference");
  sweep_sub->add_flag("--force-dense", sw.force_dense, "Disable sparse and gather kernels");
  sweep_sub->add_option("--report", sw.report, "Report stem (default <out-dir>/sweep)");

  std::string info_model;
  auto* info_sub = app.add_subcommand("info", "Describe a model file");
  info_sub->add_option("model", info_model, "Model file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  g.profile = *parse_profile(g.profile_name);

  try {
    if (*gen_cmd) gen_data(g, gen);
    else if (*train_sub) train_cmd(g, tr);
    else if (*compress_sub) compress_cmd(g, cp);
    else if (*eval_sub) eval_cmd(g, ev);
    else if (*bench_sub) bench_cmd(g, bn);
    else if (*sweep_sub) sweep_cmd(g, sw);
    else if (*info_sub) info_cmd(g, info_model);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error (io): %s\n", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInvariant;
  }
  return kExitOk;
}
