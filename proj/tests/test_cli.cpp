#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lossmix/cli.hpp"
#include "lossmix/config.hpp"

using namespace lossmix;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("lossmix_cli_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Small dataset/train settings shared by the CLI tests.
void write_tiny_config(const fs::path& file) {
  std::ofstream out(file);
  out << "# tiny desk config for tests\n"
         "[dataset]\n"
         "n_pairs = 6\n"
         "n_test = 2\n"
         "duration_s = 0.125\n"
         "\n"
         "[train]\n"
         "epochs = 2\n"
         "batch_size = 4\n";
}

}  // namespace

TEST_CASE("config parser: sections, overrides, line/column errors") {
  const KeyValueConfig kv = KeyValueConfig::parse_string(
      "[dataset]\nn_pairs = 9\nsnr_list = 0, 6, 12\n[train]\nepochs=3\n",
      "inline");
  CHECK(kv.get_int("dataset.n_pairs", 0) == 9);
  CHECK(kv.get_int("train.epochs", 0) == 3);
  CHECK(kv.get_double_list("dataset.snr_list", {}).size() == 3);

  CHECK_THROWS_WITH_AS(
      KeyValueConfig::parse_string("[dataset]\nno equals sign here\n", "f"),
      doctest::Contains("f:2:1"), ConfigParseError);
  CHECK_THROWS_WITH_AS(KeyValueConfig::parse_string("[open\n", "g"),
                       doctest::Contains("g:1"), ConfigParseError);
}

TEST_CASE("config hash: stable, sensitive, verifiable") {
  DatasetConfig a;
  DatasetConfig b;
  CHECK(dataset_config_hash(a) == dataset_config_hash(b));
  b.snr_list = {0.0, 3.0};
  CHECK(dataset_config_hash(a) != dataset_config_hash(b));

  const TempDir dir("hash");
  const std::string hash = dataset_config_hash(a);
  {
    std::ofstream out(dir.path / "x.csv");
    out << "lambda,phi\n0,0\n# config_hash=" << hash << "\n";
  }
  CHECK(artifact_hash_matches(dir.path / "x.csv", hash));
  CHECK_FALSE(artifact_hash_matches(dir.path / "x.csv", "0000000000000000"));
  {
    std::ofstream out(dir.path / "y.json");
    out << "{\"config_hash\": \"" << hash << "\"}\n";
  }
  CHECK(artifact_hash_matches(dir.path / "y.json", hash));
}

TEST_CASE("cli gen-data: manifest, idempotence, force") {
  const TempDir dir("gendata");
  const fs::path cfg_file = dir.path / "cfg.ini";
  write_tiny_config(cfg_file);

  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(),
                  "gen-data"}) == 0);
  const fs::path manifest = dir.path / "dataset" / "manifest.json";
  REQUIRE(fs::exists(manifest));
  const nlohmann::json doc = nlohmann::json::parse(read_file(manifest));
  CHECK(doc.at("splits").size() == 3);
  CHECK(doc.at("splits").contains("train"));
  CHECK(doc.at("splits").contains("val"));
  CHECK(doc.at("splits").contains("test"));
  const auto mtime = fs::last_write_time(dir.path / "dataset" / "train.bin");

  // Re-run with the identical config: cache up to date, zero writes.
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(),
                  "gen-data"}) == 0);
  CHECK(fs::last_write_time(dir.path / "dataset" / "train.bin") == mtime);

  // A changed SNR list is refused without --force, rewritten with it.
  {
    std::ofstream out(cfg_file);
    out << "[dataset]\nn_pairs = 6\nn_test = 2\nduration_s = 0.125\n"
           "snr_list = 0, 3\n[train]\nepochs = 2\nbatch_size = 4\n";
  }
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(),
                  "gen-data"}) == 3);
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(),
                  "gen-data", "--force"}) == 0);
}

TEST_CASE("cli train: jsonl lines, summary schema, determinism") {
  const TempDir dir("train");
  const fs::path cfg_file = dir.path / "cfg.ini";
  write_tiny_config(cfg_file);

  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(), "train",
                  "--regime", "erm", "--epochs", "2"}) == 0);
  const fs::path jsonl = dir.path / "train" / "erm-seed1.jsonl";
  REQUIRE(fs::exists(jsonl));
  const std::string first = read_file(jsonl);
  const auto erm_lines = lines_of(first);
  REQUIRE(erm_lines.size() == 2);
  for (const std::string& line : erm_lines) {
    const nlohmann::json rec = nlohmann::json::parse(line);
    CHECK(rec.contains("epoch"));
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("val_lsd"));
    CHECK(rec.contains("config_hash"));
    CHECK_FALSE(rec.contains("wall_ms"));
  }

  // Same seed twice: byte-identical JSONL.
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(), "train",
                  "--regime", "erm", "--epochs", "2"}) == 0);
  CHECK(read_file(jsonl) == first);

  // Learnable regime: the summary reports mean phi at the lambda quartiles.
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(), "train",
                  "--regime", "learnable-loss-mixup", "--epochs", "2",
                  "--save-checkpoint"}) == 0);
  const nlohmann::json summary = nlohmann::json::parse(read_file(
      dir.path / "train" / "learnable-loss-mixup-seed1.summary.json"));
  REQUIRE(summary.contains("mean_phi_at_quartiles"));
  CHECK(summary.at("mean_phi_at_quartiles").size() == 3);
  CHECK(summary.at("mean_phi_at_quartiles")[1].get<double>() == 0.5);
  CHECK(summary.contains("config_hash"));
  CHECK(fs::exists(dir.path / "train" /
                   "learnable-loss-mixup-seed1.ckpt.json"));

  // Unknown regime: usage error that lists the valid names.
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(), "train",
                  "--regime", "bogus"}) == 1);
}

TEST_CASE("cli mixfn: diagonal identity and curvature regimes") {
  const TempDir dir("mixfn");
  CHECK(cli::run({"--out", dir.str(), "mixfn", "--rho", "identity", "--rho",
                  "pow:3", "--rho", "pow:0.33", "--points", "101"}) == 0);

  const auto parse_curve = [&](const std::string& name) {
    const auto text = read_file(dir.path / "mixfn" / name);
    const auto lines = lines_of(text);
    REQUIRE(lines.size() >= 102);
    CHECK(lines[0] == "lambda,phi");
    CHECK(lines.back().rfind("# config_hash=", 0) == 0);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty() || lines[i][0] == '#') continue;
      const auto comma = lines[i].find(',');
      pts.emplace_back(std::stod(lines[i].substr(0, comma)),
                       std::stod(lines[i].substr(comma + 1)));
    }
    REQUIRE(pts.size() == 101);
    return pts;
  };

  const auto identity = parse_curve("phi-identity.csv");
  for (const auto& [lam, phi] : identity) {
    CHECK(std::fabs(phi - lam) <= 1e-6);  // 6-digit formatting granularity
  }

  // Endpoint flattening for convex rho, midpoint flattening for concave.
  const auto convex = parse_curve("phi-pow_3.csv");
  const auto slope = [](const std::vector<std::pair<double, double>>& pts,
                        std::size_t i) {
    return (pts[i + 1].second - pts[i].second) /
           (pts[i + 1].first - pts[i].first);
  };
  CHECK(slope(convex, 0) < slope(convex, 50));
  const auto concave = parse_curve("phi-pow_0_33.csv");
  CHECK(slope(concave, 50) < slope(concave, 0));

  // Malformed specs are usage errors.
  CHECK(cli::run({"--out", dir.str(), "mixfn", "--rho", "pow:x"}) == 1);
  CHECK(cli::run({"--out", dir.str(), "mixfn", "--rho", "nope"}) == 1);
}

TEST_CASE("cli gradcheck: all objectives pass; injected bug is caught") {
  const TempDir dir("gradcheck");
  CHECK(cli::run({"--out", dir.str(), "gradcheck"}) == 0);
  const nlohmann::json report = nlohmann::json::parse(
      read_file(dir.path / "gradcheck" / "report.json"));
  REQUIRE(report.at("objectives").size() == 5);
  for (const auto& obj : report.at("objectives")) {
    CHECK(obj.at("pass").get<bool>());
    CHECK(obj.at("max_rel_error").get<double>() < 1e-5);
    CHECK(obj.contains("worst_param"));
  }

  CHECK(cli::run({"--out", dir.str(), "gradcheck", "--self-test-bug"}) == 2);
  const nlohmann::json bugged = nlohmann::json::parse(
      read_file(dir.path / "gradcheck" / "report.json"));
  CHECK_FALSE(bugged.at("objectives")[0].at("pass").get<bool>());
}

TEST_CASE("cli ablate: csv rows, aggregates, reference footer") {
  const TempDir dir("ablate");
  const fs::path cfg_file = dir.path / "cfg.ini";
  {
    std::ofstream out(cfg_file);
    out << "[dataset]\nn_pairs = 4\nn_test = 2\nduration_s = 0.125\n"
           "[train]\nepochs = 1\nbatch_size = 4\n";
  }
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(), "ablate",
                  "--seeds", "3"}) == 0);
  const std::string csv = read_file(dir.path / "ablate" / "ablation.csv");
  const auto lines = lines_of(csv);
  REQUIRE(lines.size() >= 1 + 12 + 4 + 2);
  CHECK(lines[0] == "regime,seed,final_val_lsd");
  int data_rows = 0;
  bool footer = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].rfind("# reference-full-scale-pesq", 0) == 0) footer = true;
    if (!lines[i].empty() && lines[i][0] != '#') ++data_rows;
  }
  CHECK(data_rows == 12);
  CHECK(footer);

  const nlohmann::json doc =
      nlohmann::json::parse(read_file(dir.path / "ablate" / "ablation.json"));
  CHECK(doc.at("rows").size() == 12);
  CHECK(doc.at("summary").size() == 4);
  CHECK(doc.at("reference_full_scale_pesq").at("erm").get<double>() == 3.18);
  CHECK(doc.contains("config_hash"));
}

TEST_CASE("cli honors the output-root environment override") {
  const TempDir dir("envroot");
  setenv("LOSSMIX_OUT_ROOT", dir.str().c_str(), 1);
  const int rc = cli::run({"mixfn", "--rho", "identity", "--points", "3"});
  unsetenv("LOSSMIX_OUT_ROOT");
  CHECK(rc == 0);
  CHECK(fs::exists(dir.path / "mixfn" / "phi-identity.csv"));
}

TEST_CASE("cli: config parse failures and missing files are fatal") {
  const TempDir dir("badcfg");
  const fs::path cfg_file = dir.path / "broken.ini";
  {
    std::ofstream out(cfg_file);
    out << "[dataset]\nthis line has no assignment\n";
  }
  CHECK(cli::run({"--config", cfg_file.string(), "--out", dir.str(),
                  "gen-data"}) == 1);
  CHECK(cli::run({"--config", (dir.path / "absent.ini").string(), "--out",
                  dir.str(), "gen-data"}) == 3);
  CHECK(cli::run({"definitely-not-a-subcommand"}) == 1);
}
