#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "evoattack/campaign.hpp"
#include "evoattack/metrics.hpp"
#include "evoattack/report.hpp"
#include "evoattack/tensor_io.hpp"
#include "fixtures.hpp"

using namespace evoattack;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path workdir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "evoattack_test_campaign" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string(EVOATTACK_CLI) + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

// Writes `n` half-brightness examples and a campaign file around them.
fs::path write_campaign(const fs::path& dir, std::size_t n, json config, std::vector<std::size_t> labels = {},
                        std::vector<double> gaps = {}) {
  const Shape s{32, 32, 1};
  json examples = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = i < gaps.size() ? gaps[i] : testing::kHalfGap;
    const auto name = "img_" + std::to_string(i) + ".bin";
    save_image(testing::half_brightness_image(s, 100 + i, gap), dir / name);
    examples.push_back({{"image", name}, {"label", i < labels.size() ? labels[i] : 0}});
  }
  json j = {{"oracle", {{"builtin", "half-brightness"}, {"shape", {32, 32, 1}}, {"temperature", testing::kHalfTemperature}}},
            {"config", config},
            {"examples", examples},
            {"output_dir", "out"}};
  const auto path = dir / "campaign.json";
  write_text(path, j.dump(2));
  return path;
}

}  // namespace

TEST_CASE("summary ASR equals successes over examples") {
  const auto dir = workdir("asr");
  const auto spec = write_campaign(dir, 10, {{"rng_seed", 9}, {"max_generations", 30}});
  const auto r = cli("attack --campaign " + spec.string(), dir);
  REQUIRE(r.code == 0);
  const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
  std::size_t successes = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto ex = dir / "out" / ("example_000" + std::to_string(i));
    CHECK(fs::exists(ex / "adversarial.png"));
    CHECK(fs::exists(ex / "adversarial.bin"));
    CHECK(fs::exists(ex / "history.csv"));
    const auto rep = json::parse(slurp(ex / "report.json"));
    CHECK(rep["schema"] == 1);
    CHECK(rep["rng_seed"] == 9 + i);
    successes += rep["succeeded"].get<bool>() ? 1 : 0;

    // The saved adversarial image reproduces the reported label.
    HalfBrightnessOracle oracle({32, 32, 1}, testing::kHalfTemperature);
    CHECK(oracle.query(load_image(ex / "adversarial.bin")).top1().index == rep["final_label"].get<std::size_t>());
  }
  CHECK(summary["examples"] == 10);
  CHECK(summary["successes"] == successes);
  CHECK(summary["asr"].get<double>() == static_cast<double>(successes) / 10);
  CHECK(summary["rng_seed"] == 9);
  CHECK(json::parse(r.out) == summary);
}

TEST_CASE("two of four succeed gives ASR one half") {
  const auto dir = workdir("half");
  // Examples 0 and 1 are labelled 1 but the model says 0: already adversarial.
  // Examples 2 and 3 are far from the boundary and get a single generation.
  const auto spec = write_campaign(dir, 4, {{"rng_seed", 1}, {"max_generations", 1}}, {1, 1, 0, 0},
                                   {0.002, 0.002, 0.2, 0.2});
  const auto r = cli("attack --campaign " + spec.string(), dir);
  CHECK(r.code == 0);
  const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(summary["successes"] == 2);
  CHECK(summary["asr"] == 0.5);
  const auto rep = json::parse(slurp(dir / "out" / "example_0000" / "report.json"));
  CHECK(rep["status"] == "already_adversarial");
  CHECK(rep["queries"]["total"] == 0);
}

TEST_CASE("reports are byte-identical across repeated runs") {
  const auto dir = workdir("det");
  const auto spec = write_campaign(dir, 3, {{"rng_seed", 4}, {"max_generations", 40}});
  REQUIRE(cli("attack --campaign " + spec.string() + " --out " + (dir / "a").string(), dir).code == 0);
  REQUIRE(cli("attack --campaign " + spec.string() + " --out " + (dir / "b").string() + " --parallel-examples", dir).code == 0);
  for (const std::string f : {"example_0000/report.json", "example_0002/report.json",
                              "example_0001/history.csv", "summary.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(slurp(dir / "a/example_0001/adversarial.bin") == slurp(dir / "b/example_0001/adversarial.bin"));
}

TEST_CASE("missing seeds are generated and recorded") {
  const auto dir = workdir("seed");
  const auto spec = write_campaign(dir, 1, {{"max_generations", 2}});
  REQUIRE(cli("attack --campaign " + spec.string(), dir).code == 0);
  const auto rep = json::parse(slurp(dir / "out/example_0000/report.json"));
  CHECK(rep["rng_seed"].is_number_unsigned());
  CHECK(rep["config"]["rng_seed"] == rep["rng_seed"]);
}

TEST_CASE("flags override the config file") {
  const auto dir = workdir("flags");
  const auto spec = write_campaign(dir, 1, {{"rng_seed", 1}, {"max_generations", 50}, {"alpha", 3.0}});
  REQUIRE(cli("attack --campaign " + spec.string() + " --generations 3 --alpha 1.5 --population 6 --pm1 12", dir).code == 0);
  const auto rep = json::parse(slurp(dir / "out/example_0000/report.json"));
  CHECK(rep["config"]["max_generations"] == 3);
  CHECK(rep["config"]["alpha"] == 1.5);
  CHECK(rep["config"]["population_size"] == 6);
  CHECK(rep["config"]["z_params"]["pm1"] == 12.0);
  CHECK(rep["config"]["z_params"]["pm2"] == 3.0);
  CHECK(rep["history"].size() == 3);
}

TEST_CASE("single image mode") {
  const auto dir = workdir("single");
  save_image(testing::half_brightness_image({32, 32, 1}, 1), dir / "x.bin");
  const auto r = cli("attack --image " + (dir / "x.bin").string() + " --label 0 --oracle half-brightness --temperature 0.004 --seed 2 --generations 5 --out " +
                         (dir / "o").string(),
                     dir);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "o/example_0000/report.json"));
}

TEST_CASE("config errors exit with 2") {
  const auto dir = workdir("errors");
  CHECK(cli("attack --campaign " + (dir / "missing.json").string(), dir).code == 2);
  auto spec = write_campaign(dir, 1, {{"population_size", 3}});
  CHECK(cli("attack --campaign " + spec.string(), dir).code == 2);
  spec = write_campaign(dir, 1, {{"no_such_key", 1}});
  CHECK(cli("attack --campaign " + spec.string(), dir).code == 2);
  spec = write_campaign(dir, 1, {{"rng_seed", 1}});
  CHECK(cli("attack --campaign " + spec.string() + " --population five", dir).code == 2);
  CHECK(cli("attack --campaign " + spec.string() + " --oracle nonsense", dir).code == 2);
  CHECK(cli("attack", dir).code == 2);
  CHECK(cli("", dir).code == 2);
}

TEST_CASE("unreachable remote oracle exits with 3") {
  const auto dir = workdir("remote");
  const auto spec = write_campaign(dir, 1, {{"rng_seed", 1}});
  CHECK(cli("attack --campaign " + spec.string() + " --remote http://127.0.0.1:1 --retries 0 --timeout 0.5", dir).code == 3);
  CHECK(cli("serve-info-check --endpoint http://127.0.0.1:1 --retries 0 --timeout 0.5", dir).code == 3);
  CHECK(cli("serve-info-check", dir).code == 2);
}

TEST_CASE("metrics command") {
  const auto dir = workdir("metrics");
  const Shape s{4, 4, 1};
  std::vector<float> v(s.size(), 0.0f);
  v[5] = 1.0f;
  save_image(ImageTensor(s, v), dir / "a.png");
  save_image(ImageTensor::filled(s, 0.0f), dir / "b.png");

  auto r = cli("metrics " + (dir / "a.png").string() + " " + (dir / "b.png").string(), dir);
  REQUIRE(r.code == 0);
  auto m = json::parse(r.out);
  CHECK(std::abs(m["z"].get<double>() - 0.9822075519820185) < 1e-12);
  CHECK(m["l0"] == 1);
  CHECK(m["linf"] == 1.0);
  CHECK(m["l2_per_pixel"].get<double>() == doctest::Approx(1.0 / 16));

  r = cli("metrics " + (dir / "b.png").string() + " " + (dir / "b.png").string(), dir);
  m = json::parse(r.out);
  CHECK(m["z"] == 0.0);
  CHECK(m["l0"] == 0);
  CHECK(m["l2_per_pixel"] == 0.0);

  // Same numbers as a direct library call.
  const auto a = testing::half_brightness_image({8, 8, 3}, 1, 0.05);
  const auto b = testing::half_brightness_image({8, 8, 3}, 2, 0.05);
  save_image(a, dir / "a.bin");
  save_image(b, dir / "b.bin");
  r = cli("metrics " + (dir / "a.bin").string() + " " + (dir / "b.bin").string() + " --pm1 15 --pm2 3", dir);
  CHECK(json::parse(r.out) == to_json(perturbation_report(difference(a, b), ZParams::machine())));

  save_image(ImageTensor::filled({3, 3, 1}, 0.0f), dir / "c.png");
  CHECK(cli("metrics " + (dir / "a.png").string() + " " + (dir / "c.png").string(), dir).code == 2);
}

TEST_CASE("summary is recomputable from the reports") {
  const auto dir = workdir("recompute");
  const auto spec = write_campaign(dir, 5, {{"rng_seed", 3}, {"max_generations", 20}});
  REQUIRE(cli("attack --campaign " + spec.string(), dir).code == 0);
  std::vector<json> reports;
  for (std::size_t i = 0; i < 5; ++i)
    reports.push_back(json::parse(slurp(dir / "out" / ("example_000" + std::to_string(i)) / "report.json")));
  auto summary = json::parse(slurp(dir / "out/summary.json"));
  summary.erase("rng_seed");
  CHECK(summarize(reports) == summary);
}

TEST_CASE("summarize aggregates by hand") {
  auto rep = [](bool ok, std::size_t final_label, double l2, double total, json first, double p, double z) {
    return json{{"true_label", 0}, {"final_label", final_label}, {"target", nullptr},
                {"status", "completed"}, {"succeeded", ok},
                {"queries", {{"total", total}, {"first_success", first}}},
                {"perturbation", {{"l2_per_pixel", l2}}}, {"best", {{"P", p}, {"Z", z}}}};
  };
  const auto s = summarize({rep(true, 1, 0.002, 100, 40, 0.1, 2.0), rep(false, 0, 0.5, 300, nullptr, -0.2, 4.0),
                            rep(true, 1, 0.004, 200, 80, 0.3, 6.0)});
  CHECK(s["asr"].get<double>() == doctest::Approx(2.0 / 3));
  CHECK(s["mean_l2_per_pixel"].get<double>() == doctest::Approx(0.003));
  CHECK(s["mean_queries"].get<double>() == doctest::Approx(200));
  CHECK(s["median_queries"].get<double>() == doctest::Approx(200));
  CHECK(s["mean_first_success_queries"].get<double>() == doctest::Approx(60));
  CHECK(s["median_first_success_queries"].get<double>() == doctest::Approx(60));
  CHECK(s["mean_final_P"].get<double>() == doctest::Approx(0.2 / 3));
  CHECK(s["mean_final_Z"].get<double>() == doctest::Approx(4.0));
}

TEST_CASE("history CSV has the fixed columns") {
  const auto dir = workdir("csv");
  const auto spec = write_campaign(dir, 1, {{"rng_seed", 1}, {"max_generations", 4}});
  REQUIRE(cli("attack --campaign " + spec.string(), dir).code == 0);
  std::istringstream csv(slurp(dir / "out/example_0000/history.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "generation,best_fitness,best_P,best_Z,cumulative_queries");
  std::size_t rows = 0;
  while (std::getline(csv, line)) rows += line.empty() ? 0 : 1;
  CHECK(rows == 4);
}

TEST_CASE("alpha sweep") {
  const auto dir = workdir("sweep");
  const auto spec = write_campaign(dir, 10, {{"rng_seed", 21}});
  const auto r = cli("sweep-alpha --campaign " + spec.string() + " --alphas 0 1 2 3 4 6", dir);
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(dir / "out/sweep_alpha.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "alpha,mean_final_P,mean_final_Z,asr");
  std::vector<std::array<double, 4>> rows;
  while (std::getline(csv, line)) {
    std::array<double, 4> row{};
    std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &row[0], &row[1], &row[2], &row[3]);
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 6);
  for (const auto& row : rows) CHECK(row[1] <= rows[0][1]);
  std::size_t non_increasing = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) non_increasing += rows[k][2] <= rows[k - 1][2] ? 1 : 0;
  CHECK(non_increasing >= 4);

  // A one-value sweep matches the attack summary.
  REQUIRE(cli("sweep-alpha --campaign " + spec.string() + " --alphas 2 --out " + (dir / "one").string(), dir).code == 0);
  REQUIRE(cli("attack --campaign " + spec.string() + " --alpha 2 --out " + (dir / "att").string(), dir).code == 0);
  CHECK(slurp(dir / "one/alpha_0/summary.json") == slurp(dir / "att/summary.json"));
}
