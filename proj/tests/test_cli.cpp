#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
  if (const char* p = std::getenv("FKLAB_CLI_PATH")) return p;
  return FKLAB_CLI_PATH;
}

std::string fixture(const std::string& name) {
  const char* d = std::getenv("FKLAB_FIXTURE_DIR");
  return (fs::path(d ? d : FKLAB_FIXTURE_DIR) / name).string();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("fklab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log_dir) {
  const std::string cmd =
      "\"" + cli_path() + "\" " + args + " > \"" + (log_dir / "run.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("ingest passes a clean panel through and is idempotent") {
  auto dir = fresh_dir("ingest_clean");
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + dir.string() +
                  "\" ingest",
              dir) == 0);
  REQUIRE(fs::exists(dir / "panel.csv"));
  REQUIRE(fs::exists(dir / "manifest.json"));
  auto summary = json::parse(slurp(dir / "ingest.json"));
  REQUIRE(summary["dropped_series"].empty());

  // transformed output declares itself already clean: re-ingesting is a no-op
  auto dir2 = fresh_dir("ingest_clean2");
  REQUIRE(run("--input \"" + (dir / "panel.csv").string() + "\" --out \"" + dir2.string() +
                  "\" ingest",
              dir2) == 0);
  REQUIRE(slurp(dir2 / "panel.csv") == slurp(dir / "panel.csv"));
}

TEST_CASE("ingest drops the series that is mostly holes and keeps the sparse one") {
  auto dir = fresh_dir("ingest_missing");
  REQUIRE(run("--input \"" + fixture("missing_panel.csv") + "\" --out \"" + dir.string() +
                  "\" ingest",
              dir) == 0);
  auto summary = json::parse(slurp(dir / "ingest.json"));
  REQUIRE(summary["dropped_series"] == json::array({"s3"}));
  const std::string header = lines_of(slurp(dir / "panel.csv")).front();
  REQUIRE(header.find("s3") == std::string::npos);
  REQUIRE(header.find("s7") != std::string::npos);
}

TEST_CASE("bad invocations exit nonzero") {
  auto dir = fresh_dir("badflags");
  REQUIRE(run("--input /no/such/file.csv --out \"" + dir.string() + "\" ingest", dir) == 1);
  REQUIRE(run("--out \"" + dir.string() + "\" ingest", dir) == 1);  // no input
  REQUIRE(run("", dir) == 1);                                       // no subcommand
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + dir.string() +
                  "\" sweep --target nope",
              dir) == 1);
  REQUIRE(run("--definitely-not-a-flag", dir) != 0);
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + dir.string() +
                  "\" evaluate --window 20 --horizons 1 --subsamples 2099-01",
              dir) == 1);
}

TEST_CASE("diagnose writes the full diagnostic set deterministically") {
  auto a = fresh_dir("diag_a");
  auto b = fresh_dir("diag_b");
  const std::string flags = " diagnose --khill 3 --kmax 4";
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + a.string() + "\"" + flags,
              a) == 0);
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + b.string() + "\"" + flags,
              b) == 0);

  for (const char* f : {"split_indices.csv", "tail_table.csv", "diagnostics.json", "spectrum.csv",
                        "spectrum.svg"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    REQUIRE(slurp(a / f) == slurp(b / f));
  }
  auto dj = json::parse(slurp(a / "diagnostics.json"));
  REQUIRE(dj["T"] == 68);  // two leading rows lost to second differences
  REQUIRE(dj["N"] == 8);
  REQUIRE(dj["k_bai_ng"].get<int>() >= 1);
  const std::string svg = slurp(a / "spectrum.svg");
  REQUIRE(svg.find("<svg") != std::string::npos);
}

TEST_CASE("sweep emits both branches and flags the interpolation point") {
  auto dir = fresh_dir("sweep");
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + dir.string() +
                  "\" sweep --target s0 --horizon 1 --kfactors 2",
              dir) == 0);
  auto rows = lines_of(slurp(dir / "curve.csv"));
  REQUIRE(rows.front() == "branch,n_eff,msfe,unstable");
  bool saw_pc = false, saw_aug = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto f = fields_of(rows[i]);
    REQUIRE(f.size() == 4);
    REQUIRE((f[0] == "pc" || f[0] == "augment"));
    saw_pc = saw_pc || f[0] == "pc";
    saw_aug = saw_aug || f[0] == "augment";
    REQUIRE(std::stod(f[2]) >= 0.0);
    REQUIRE((f[3] == "0" || f[3] == "1"));
  }
  REQUIRE(saw_pc);
  REQUIRE(saw_aug);
  auto meta = json::parse(slurp(dir / "curve_meta.json"));
  REQUIRE(meta["interpolation_threshold"] == 33);  // half of 68 rows, one pair lost to the horizon
  REQUIRE(meta["kernel_asymptote"].get<double>() > 0.0);
}

TEST_CASE("a self-comparison evaluation lands on exact parity") {
  auto a = fresh_dir("eval_a");
  auto b = fresh_dir("eval_b");
  const std::string flags =
      " evaluate --self-compare --window 20 --horizons 1 --kmax 5 --target s0";
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + a.string() + "\"" + flags,
              a) == 0);
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + b.string() + "\"" + flags,
              b) == 0);

  auto rows = lines_of(slurp(a / "cells.csv"));
  REQUIRE(rows.size() == 2);
  auto f = fields_of(rows[1]);
  REQUIRE(f[0] == "s0");
  REQUIRE(f[2] == "47");  // P = 68 - 1 - 20
  REQUIRE(f[3] == "0");
  REQUIRE(std::stod(f[6]) == 1.0);
  REQUIRE(std::stod(f[7]) == 0.0);
  REQUIRE(std::stod(f[8]) == 1.0);

  for (const char* file : {"cells.csv", "records.csv", "summary.json"}) {
    INFO(file);
    REQUIRE(slurp(a / file) == slurp(b / file));
  }
  auto manifest = json::parse(slurp(a / "manifest.json"));
  REQUIRE(manifest["command"] == "evaluate");
  REQUIRE(manifest["config"]["window"] == 20);
  REQUIRE(manifest["config"]["self_compare"] == true);
}

TEST_CASE("evaluation sweeps every series and splits subsamples") {
  auto dir = fresh_dir("eval_all");
  REQUIRE(run("--input \"" + fixture("small_panel.csv") + "\" --out \"" + dir.string() +
                  "\" evaluate --window 20 --horizons 1,3 --kmax 5 --subsamples 1992-06",
              dir) == 0);
  auto cells = lines_of(slurp(dir / "cells.csv"));
  REQUIRE(cells.size() == 1 + 16);  // 8 targets x 2 horizons
  int records_expected = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    auto f = fields_of(cells[i]);
    const int P = std::stoi(f[2]);
    const int h = std::stoi(f[1]);
    REQUIRE(P == 68 - h - 20);
    REQUIRE(std::stoi(f[3]) == 0);
    records_expected += P;
  }
  REQUIRE(static_cast<int>(lines_of(slurp(dir / "records.csv")).size()) == 1 + records_expected);

  auto subs = lines_of(slurp(dir / "subsamples.csv"));
  REQUIRE(subs.size() == 1 + 32);  // two periods per cell
  auto summary = json::parse(slurp(dir / "summary.json"));
  REQUIRE(summary["by_horizon"].size() == 2);
  REQUIRE(summary["skipped_origins"] == 0);
}

TEST_CASE("holes in the target are skipped, logged, and change the exit code") {
  auto dir = fresh_dir("eval_holes");
  const int rc = run("--input \"" + fixture("missing_panel.csv") + "\" --out \"" + dir.string() +
                         "\" evaluate --window 20 --horizons 1 --kmax 5 --target s7",
                     dir);
  REQUIRE(rc == 3);
  REQUIRE(!slurp(dir / "skip_log.txt").empty());
  auto rows = lines_of(slurp(dir / "cells.csv"));
  REQUIRE(rows.size() == 2);
  auto f = fields_of(rows[1]);
  const int P = std::stoi(f[2]);
  const int skipped = std::stoi(f[3]);
  REQUIRE(skipped > 0);
  REQUIRE(P + skipped == 47);  // every origin is either booked or logged
}
