#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "creep/cli.hpp"
#include "creep/dataset.hpp"
#include "creep/error.hpp"
#include "creep/text.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = creep::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("creep_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Small dataset plus a prepared directory, shared by the tests below.
const fs::path& workspace() {
  static const fs::path dir = [] {
    auto d = fresh_dir("shared");
    REQUIRE(cli({"--out", d.string(), "generate", "--n-steps", "40"}).code == 0);
    REQUIRE(cli({"--out", d.string(), "prepare", "--subsample", "16"}).code == 0);
    REQUIRE(cli({"--out", d.string(), "train", "--model", "baseline", "--epochs", "2"}).code == 0);
    REQUIRE(cli({"--out", d.string(), "train", "--model", "vae", "--epochs", "2"}).code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("generate and prepare on the default grid") {
  const auto dir = fresh_dir("grid");
  const auto gen = cli({"--out", dir.string(), "generate"});
  REQUIRE(gen.code == 0);
  CHECK(gen.out.find("generated 20 curves, 10000 rows") != std::string::npos);
  const auto csv = slurp(dir / "dataset.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10'001);
  const auto meta = json::parse(slurp(dir / "dataset.meta.json"));
  CHECK(meta.at("unit_convention") == "pa_hours");
  CHECK(meta.at("n_steps") == 500);

  const auto prep = cli({"--out", dir.string(), "prepare"});
  REQUIRE(prep.code == 0);
  CHECK(prep.out.find("train: 16 sequences, val: 4 sequences, L=500") != std::string::npos);
  const auto data = creep::read_prepared(dir / "prepared");
  const std::vector<creep::SequenceKey> expected = {{700, 75}, {800, 100}, {900, 125}, {1000, 50}};
  CHECK(data.val.keys == expected);

  // reruns are byte-identical
  const auto again = fresh_dir("grid_again");
  REQUIRE(cli({"--out", again.string(), "generate"}).code == 0);
  CHECK(slurp(again / "dataset.csv") == csv);
  CHECK(slurp(again / "dataset.meta.json") == slurp(dir / "dataset.meta.json"));
}

TEST_CASE("exit codes") {
  const auto& ws = workspace();
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--bogus", "generate"}).code == 2);
  CHECK(cli({"--out", ws.string(), "train", "--model", "gru"}).code == 2);
  CHECK(cli({"--out", ws.string(), "generate", "--temperatures", "750"}).code == 2);
  CHECK(cli({"--out", ws.string(), "generate", "--n-steps", "1"}).code == 2);
  CHECK(cli({"--out", ws.string(), "prepare", "--val-key", "750:75"}).code == 2);
  CHECK(cli({"--out", ws.string(), "bench", "--model", "baseline", "--reps", "2"}).code == 2);
  CHECK(cli({"--config", (ws / "missing.json").string(), "generate"}).code == 3);
  CHECK(cli({"--out", ws.string(), "prepare", "--data", (ws / "missing.csv").string()}).code == 3);
  CHECK(cli({"--out", ws.string(), "eval", (ws / "missing.ckpt").string()}).code == 3);
  CHECK(cli({"--out", (ws / "diverge").string(), "train", "--model", "baseline", "--epochs", "3", "--lr", "1e30",
             "--data", (ws / "prepared").string()})
            .code == 4);

  std::ofstream(ws / "garbage.ckpt") << "not a checkpoint";
  CHECK(cli({"--out", ws.string(), "eval", (ws / "garbage.ckpt").string()}).code == 3);

  std::ofstream(ws / "bad.json") << R"({"train": {"epochz": 3}})";
  CHECK(cli({"--config", (ws / "bad.json").string(), "--out", ws.string(), "train", "--model", "baseline"}).code == 2);
  std::ofstream(ws / "broken.json") << "{";
  CHECK(cli({"--config", (ws / "broken.json").string(), "generate"}).code == 2);

  CHECK(creep::cli::exit_code_for(creep::ErrorKind::DegenerateVariance) == 4);
  CHECK(creep::cli::exit_code_for(creep::ErrorKind::NoSuchTemperature) == 2);
  CHECK(creep::cli::exit_code_for(creep::ErrorKind::IoFailure) == 3);
}

TEST_CASE("config blocks and flag precedence") {
  const auto& ws = workspace();
  const auto dir = fresh_dir("config");
  std::ofstream(dir / "run.json") << json{{"seed", 7},
                                          {"out", dir.string()},
                                          {"train", {{"epochs", 3}, {"data", (ws / "prepared").string()}}}}
                                          .dump();
  const auto from_config = cli({"--config", (dir / "run.json").string(), "train", "--model", "baseline"});
  REQUIRE(from_config.code == 0);
  const auto history = slurp(dir / "baseline_history.csv");
  CHECK(std::count(history.begin(), history.end(), '\n') == 4);

  const auto flagged = cli({"--config", (dir / "run.json").string(), "train", "--model", "baseline", "--epochs", "2"});
  REQUIRE(flagged.code == 0);
  const auto shorter = slurp(dir / "baseline_history.csv");
  CHECK(std::count(shorter.begin(), shorter.end(), '\n') == 3);
}

TEST_CASE("training output is deterministic") {
  const auto& ws = workspace();
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  for (const auto& d : {a, b}) {
    REQUIRE(cli({"--out", d.string(), "--seed", "5", "train", "--model", "transformer", "--epochs", "2", "--data",
                 (ws / "prepared").string()})
                .code == 0);
  }
  CHECK(slurp(a / "transformer_history.csv") == slurp(b / "transformer_history.csv"));
  CHECK(slurp(a / "transformer.ckpt") == slurp(b / "transformer.ckpt"));
  const auto c = fresh_dir("det_c");
  REQUIRE(cli({"--out", c.string(), "--seed", "6", "train", "--model", "transformer", "--epochs", "2", "--data",
               (ws / "prepared").string()})
              .code == 0);
  CHECK(slurp(a / "transformer_history.csv") != slurp(c / "transformer_history.csv"));
}

TEST_CASE("eval report matches the printed table") {
  const auto& ws = workspace();
  const auto dir = fresh_dir("eval");
  const auto r = cli({"--out", dir.string(), "eval", (ws / "baseline.ckpt").string(), (ws / "vae.ckpt").string(),
                      "--data", (ws / "prepared").string()});
  REQUIRE(r.code == 0);
  const auto report = json::parse(slurp(dir / "eval.json"));
  REQUIRE(report.at("models").size() == 2);
  CHECK(report.at("unit_convention") == "pa_hours");
  std::istringstream table(r.out);
  std::string header;
  std::getline(table, header);
  CHECK(header.find("Val R2") != std::string::npos);
  for (const auto& row : report.at("models")) {
    std::string line;
    std::getline(table, line);
    const std::string label = row.at("label");
    CHECK(line.rfind(label, 0) == 0);
    std::istringstream cells(line.substr(label.size()));
    for (const char* split : {"train", "val"}) {
      for (const char* metric : {"rmse", "r2", "mae"}) {
        std::string cell;
        cells >> cell;
        const double printed = creep::parse_double(cell);
        const double stored = row.at(split).at(metric);
        CHECK(printed == doctest::Approx(stored).epsilon(1e-5));
      }
    }
  }
  CHECK(report.at("models")[0].at("label") == "Baseline LSTM");
  CHECK(report.at("models")[1].at("label") == "BiLSTM-VAE");
}

TEST_CASE("bench report") {
  const auto dir = fresh_dir("bench");
  const auto r = cli({"--out", dir.string(), "bench", "--model", "baseline", "transformer", "--lengths", "8", "32",
                      "--reps", "3", "--warmup", "1"});
  REQUIRE(r.code == 0);
  const auto report = json::parse(slurp(dir / "bench.json"));
  CHECK(report.at("threads") == 1);
  REQUIRE(report.at("results").size() == 4);
  for (const auto& row : report.at("results")) {
    CHECK(row.at("mean_ms").get<double>() >= row.at("min_ms").get<double>());
    CHECK(row.at("mean_ms").get<double>() <= row.at("max_ms").get<double>());
    CHECK(row.at("reps") == 3);
  }
  CHECK_FALSE(report.at("host").at("description").get<std::string>().empty());
}

TEST_CASE("predict") {
  const auto& ws = workspace();
  const auto dir = fresh_dir("predict");
  const auto out = dir / "curve.csv";
  const auto r = cli({"--out", dir.string(), "predict", (ws / "baseline.ckpt").string(), "--temperature", "800",
                      "--stress", "100", "--n-steps", "25", "--output", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "timestamp,temperature,stress,predicted_strain");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto fields = creep::split_fields(line);
    REQUIRE(fields.size() == 4);
    CHECK(creep::parse_double(fields[3]) >= 0.0);
    ++rows;
  }
  CHECK(rows == 25);
  const auto meta = json::parse(slurp(dir / "curve.meta.json"));
  CHECK(meta.at("strain_floor") == 0.0);
  CHECK(meta.at("extrapolation") == false);

  const auto far = cli({"--out", dir.string(), "predict", (ws / "baseline.ckpt").string(), "--temperature", "1200",
                        "--stress", "100"});
  CHECK(far.code == 0);
  CHECK(far.err.find("extrapolating") != std::string::npos);

  const auto vae = cli({"--out", dir.string(), "--seed", "3", "predict", (ws / "vae.ckpt").string(), "--temperature",
                        "900", "--stress", "75", "--n-steps", "10", "--uncertainty", "8"});
  REQUIRE(vae.code == 0);
  std::istringstream vcsv(slurp(dir / "prediction.csv"));
  std::getline(vcsv, line);
  CHECK(line == "timestamp,temperature,stress,predicted_strain,mean_strain,std_strain");
  while (std::getline(vcsv, line)) CHECK(creep::parse_double(creep::split_fields(line)[5]) >= 0.0);
  const auto first = slurp(dir / "prediction.csv");
  REQUIRE(cli({"--out", dir.string(), "--seed", "3", "predict", (ws / "vae.ckpt").string(), "--temperature", "900",
               "--stress", "75", "--n-steps", "10", "--uncertainty", "8"})
              .code == 0);
  CHECK(slurp(dir / "prediction.csv") == first);

  const auto base = (ws / "baseline.ckpt").string();
  CHECK(cli({"predict", base, "--temperature", "800", "--stress", "100", "--uncertainty", "4"}).code == 2);
  CHECK(cli({"predict", (ws / "vae.ckpt").string(), "--temperature", "800", "--stress", "100", "--uncertainty", "1"})
            .code == 2);
  CHECK(cli({"predict", base, "--temperature", "800", "--stress", "100", "--t-end", "0"}).code == 2);
  CHECK(cli({"predict", base, "--temperature", "800"}).code == 2);
}
