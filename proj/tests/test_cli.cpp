// Drives the csic binary end to end in a scratch directory.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "csic/byte_io.hpp"
#include "csic/compressor.hpp"
#include "csic/metrics.hpp"
#include "csic/model_io.hpp"

namespace fs = std::filesystem;
using namespace csic;
using nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("csic_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with `args`, output captured in <scratch>/last.log. Returns the exit code.
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CSIC_CLI_PATH + "\" " + args + " > \"" +
                          (scratch() / "last.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string out(const std::string& dir) { return "--out-dir \"" + (scratch() / dir).string() + "\" "; }

fs::path in(const std::string& dir, const std::string& name) { return scratch() / dir / name; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string log_text() { return slurp(scratch() / "last.log"); }

int csv_rows(const fs::path& p) {
  const std::string t = slurp(p);
  return static_cast<int>(std::count(t.begin(), t.end(), '\n')) - 1;
}

// One shared pipeline: data, a 1-epoch model and every compressed variant.
struct Pipeline {
  Pipeline() {
    REQUIRE(run_cli(out("run") + "gen-data --train-samples 40 --test-samples 12") == 0);
    REQUIRE(run_cli(out("run") + "train --gamma 0.25 --epochs 1 --batch 16") == 0);
  }
  fs::path model = in("run", "csinet_m128.csim");
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("gen-data writes four datasets with the requested counts") {
  pipeline();
  for (const char* name : {"indoor_train.csid", "indoor_test.csid", "outdoor_train.csid", "outdoor_test.csid"}) {
    REQUIRE(fs::exists(in("run", name)));
    const Dataset d = import_dataset(in("run", name));
    CHECK(d.count() == (std::string(name).find("train") != std::string::npos ? 40u : 12u));
    CHECK(d.rows == 16);
    CHECK(d.antennas == 16);
  }
  const json m = load_json(in("run", "gen-data.manifest.json"));
  CHECK(m["command"] == "gen-data");
  CHECK(m["seed"] == 1);
  CHECK(m["profile"] == "desk");
  CHECK(m["params"]["train_samples"] == 40);
}

TEST_CASE("same seed reproduces data and model files bitwise") {
  pipeline();
  REQUIRE(run_cli(out("again") + "gen-data --train-samples 40 --test-samples 12") == 0);
  REQUIRE(run_cli(out("again") + "train --gamma 0.25 --epochs 1 --batch 16") == 0);
  for (const char* name : {"indoor_train.csid", "outdoor_test.csid", "csinet_m128.csim"}) {
    CHECK(read_file(in("again", name)) == read_file(in("run", name)));
  }
  REQUIRE(run_cli(out("other") + "--seed 2 gen-data --train-samples 40 --test-samples 12") == 0);
  CHECK(read_file(in("other", "indoor_train.csid")) != read_file(in("run", "indoor_train.csid")));
}

TEST_CASE("train writes a loadable model and its loss history") {
  const Model m = load_model(pipeline().model);
  CHECK(m.spec.gamma == 0.25);
  CHECK(m.spec.codeword_size() == 128);
  CHECK(m.epochs_seen == 1);
  CHECK(fs::exists(in("run", "csinet_m128.loss.csv")));
  CHECK(csv_rows(in("run", "csinet_m128.loss.csv")) == 1);
  const json manifest = load_json(in("run", "train.manifest.json"));
  CHECK(manifest["params"]["epochs"] == 1);
  CHECK(manifest["params"]["batch"] == 16);
}

TEST_CASE("compress produces every technique") {
  const std::string model = "-m \"" + pipeline().model.string() + "\" ";
  REQUIRE(run_cli(out("run") + "compress prune " + model + "--ratio 0.5 --fine-tune-epochs 1 --batch 16") == 0);
  REQUIRE(run_cli(out("run") + "compress quantize " + model + "--level dynamic-i8") == 0);
  REQUIRE(run_cli(out("run") + "compress cluster " + model + "--k 32 --init kmeanspp --fine-tune-epochs 1 --batch 16") == 0);
  REQUIRE(run_cli(out("run") + "compress prune-quantize " + model + "--ratio 0.5 --fine-tune-epochs 1 --batch 16") == 0);
  REQUIRE(run_cli(out("run") + "compress cluster-quantize " + model + "--fine-tune-epochs 1 --batch 16 --level f16") == 0);

  const Model base = load_model(pipeline().model);
  const Model prune = load_model(in("run", "csinet_m128_prune.csim"));
  const Model quant = load_model(in("run", "csinet_m128_quantize.csim"));
  const Model cluster = load_model(in("run", "csinet_m128_cluster.csim"));
  const Model pq = load_model(in("run", "csinet_m128_prune-quantize.csim"));
  const Model cq = load_model(in("run", "csinet_m128_cluster-quantize.csim"));
  CHECK(achieved_sparsity(prune) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(achieved_sparsity(pq) == doctest::Approx(0.5).epsilon(1e-4));
  for (std::size_t i : base.dense_layers()) {
    CHECK(prune.layers[i].weights.tag() == StoreTag::kSparseBitmap);
    CHECK(quant.layers[i].weights.tag() == StoreTag::kQuantizedI8);
    CHECK(cluster.layers[i].weights.get_if<Clustered>()->k == 32);
    CHECK(pq.layers[i].weights.get_if<SparseBitmap>()->values.encoding() == ValueEncoding::kI8);
    CHECK(cq.layers[i].weights.get_if<Clustered>()->centroids.encoding() == ValueEncoding::kF16);
  }
  CHECK(size_of(pq) < size_of(quant));
  const json manifest = load_json(in("run", "compress.manifest.json"));
  CHECK(manifest["params"]["technique"] == "cluster-quantize");
}

TEST_CASE("eval matches the library metrics and is repeatable") {
  const fs::path model = pipeline().model;
  REQUIRE(run_cli(out("run") + "eval -m \"" + model.string() + "\"") == 0);
  const json first = load_json(in("run", "eval.json"));
  REQUIRE(first.size() == 2);
  const QualityReport lib = evaluate(plan(load_model(model)), import_dataset(in("run", "indoor_test.csid")), 256);
  CHECK(first[0]["nmse_db"].get<double>() == lib.nmse_db);
  CHECK(first[0]["rho"].get<double>() == lib.rho);
  REQUIRE(run_cli(out("run") + "eval -m \"" + model.string() + "\"") == 0);
  CHECK(load_json(in("run", "eval.json")) == first);
}

TEST_CASE("bench with and without sparse kernels differs only in timing") {
  pipeline();
  const fs::path pruned = in("run", "csinet_m128_prune.csim");
  if (!fs::exists(pruned)) {
    REQUIRE(run_cli(out("run") + "compress prune -m \"" + pipeline().model.string() + "\" --fine-tune-epochs 0") == 0);
  }
  const std::string models = "-m \"" + pipeline().model.string() + "\" \"" + pruned.string() + "\" ";
  REQUIRE(run_cli(out("run") + "bench " + models + "--warmup 1 --runs 10 --report \"" + in("run", "sparse").string() + "\"") == 0);
  REQUIRE(run_cli(out("run") + "bench " + models + "--warmup 1 --runs 10 --force-dense --report \"" +
               in("run", "dense").string() + "\"") == 0);
  CHECK(csv_rows(in("run", "sparse.csv")) == 2);
  const auto sparse = parse_bench_json(slurp(in("run", "sparse.json")));
  const auto dense = parse_bench_json(slurp(in("run", "dense.json")));
  REQUIRE(sparse.size() == 2);
  REQUIRE(dense.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(sparse[i].indoor->nmse_db - dense[i].indoor->nmse_db) <= 1e-5);
    CHECK(std::abs(sparse[i].outdoor->rho - dense[i].outdoor->rho) <= 1e-5);
    CHECK(sparse[i].size_bytes == dense[i].size_bytes);
  }
  CHECK(sparse[1].timing.macs < dense[1].timing.macs);
  CHECK(load_json(in("run", "bench.manifest.json"))["params"]["force_dense"] == true);
}

TEST_CASE("sweep covers the default grid") {
  REQUIRE(run_cli(out("run") + "sweep -m \"" + pipeline().model.string() +
               "\" --fine-tune-epochs 1 --warmup 0 --runs 10") == 0);
  CHECK(csv_rows(in("run", "sweep.csv")) == 15);
  CHECK(csv_rows(in("run", "sweep_grid.csv")) == 15);
  const auto cells = parse_bench_json(slurp(in("run", "sweep.json")));
  REQUIRE(cells.size() == 15);
  // Size strictly decreases along the sparsity axis for each level.
  for (int level = 0; level < 3; ++level)
    for (int s = 1; s < 5; ++s) CHECK(cells[s * 3 + level].size_bytes < cells[(s - 1) * 3 + level].size_bytes);
  CHECK(fs::exists(in("run", "sweep.manifest.json")));
}

TEST_CASE("info describes the model") {
  REQUIRE(run_cli(out("run") + "info \"" + pipeline().model.string() + "\"") == 0);
  const std::string text = log_text();
  CHECK(text.find("M=128") != std::string::npos);
  CHECK(text.find("dense") != std::string::npos);
  CHECK(load_json(in("run", "info.manifest.json"))["outputs"]["size_bytes"] == size_of(load_model(pipeline().model)));
}

TEST_CASE("exit codes") {
  const std::string model = "-m \"" + pipeline().model.string() + "\" ";
  CHECK(run_cli(out("err") + "compress shrink " + model) == 2);
  CHECK(run_cli(out("err") + "compress prune " + model + "--ratio 1.5") == 2);
  CHECK(run_cli(out("err") + "--profile huge info \"" + pipeline().model.string() + "\"") == 2);
  CHECK(run_cli(out("err") + "train --no-such-flag") == 2);

  const fs::path corrupt = scratch() / "corrupt.csim";
  auto bytes = read_file(pipeline().model);
  bytes.resize(bytes.size() / 2);
  write_file(corrupt, bytes);
  CHECK(run_cli(out("err") + "info \"" + corrupt.string() + "\"") == 3);
  CHECK(log_text().find("offset") != std::string::npos);
  CHECK(run_cli(out("err") + "eval -m \"" + pipeline().model.string() + "\" --data \"" + corrupt.string() + "\"") == 3);
}
