#include "doctest.h"

#include <fstream>
#include <regex>
#include <sstream>

#include "llmpoet/cli.hpp"
#include "llmpoet/poet.hpp"
#include "poet_fixtures.hpp"
#include "scripted.hpp"

using namespace llmpoet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli_run(const std::vector<std::string>& args, const cli::Hooks& hooks = {}) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, hooks);
  return {code, out.str(), err.str()};
}

fs::path tiny_config_file(const fs::path& dir) {
  auto cfg = testing::tiny_config(dir / "unused", 3, 2);
  const fs::path p = dir / "tiny.json";
  io::write_file_atomic(p, to_json(cfg).dump(2));
  return p;
}

/// Canned LLM: captions get " with gaps", grids depend on the request text.
cli::Hooks scripted_hooks() {
  cli::Hooks h;
  h.make_client = [](const RunConfig&) {
    auto c = std::make_unique<testing::ScriptedCompleter>();
    c->fallback = [](const llm::CompletionRequest& r) -> std::string {
      if (r.user_text.find("Before:") != std::string::npos) return "stairs with gaps";
      std::string floor(12, 'H');
      floor[r.user_text.size() % 3 + 9] = '-';
      return "------------\n------------\n---HH-------\n" + floor;
    };
    return c;
  };
  return h;
}

std::vector<std::string> jsonl_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("help documents every option with its default") {
  auto top = cli_run({"--help"});
  CHECK(top.code == 0);
  for (const char* cmd : {"run-poet", "eval", "gen-env", "mutate-env", "dataset-export", "report"}) {
    CHECK(top.out.find(cmd) != std::string::npos);
    auto r = cli_run({cmd, "--help"});
    CHECK(r.code == 0);
    std::istringstream lines(r.out);
    int options = 0;
    for (std::string line; std::getline(lines, line);) {
      if (line.find("  --") != 0 || line.find("--help") != std::string::npos) continue;
      ++options;
      std::string block = line;
      // CLI11 wraps long option signatures onto the next line
      if (line.find("]") == std::string::npos && line.find("(default") == std::string::npos &&
          line.find("REQUIRED") == std::string::npos) {
        std::string next;
        std::getline(lines, next);
        block += next;
      }
      INFO(cmd << ": " << block);
      CHECK((block.find("[") != std::string::npos || block.find("(default") != std::string::npos ||
             block.find("REQUIRED") != std::string::npos));
    }
    CHECK(options > 0);
  }
  auto rp = cli_run({"run-poet", "--help"});
  CHECK(rp.out.find("--iterations INT [100]") != std::string::npos);
  CHECK(rp.out.find("--population INT [10]") != std::string::npos);
  CHECK(rp.out.find("[stub]") != std::string::npos);
  auto ev = cli_run({"eval", "--help"});
  CHECK(ev.out.find("--repeats INT [5]") != std::string::npos);
  auto ge = cli_run({"gen-env", "--help"});
  CHECK(ge.out.find("--width INT [100]") != std::string::npos);
  CHECK(ge.out.find("--height INT [20]") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli_run({}).code == 1);
  CHECK(cli_run({"run-poet", "--bogus"}).code == 1);
  CHECK(cli_run({"run-poet", "--generator", "gan"}).code == 1);
  CHECK(cli_run({"run-poet", "--population", "0", "--out", "/tmp/llmpoet_never"}).code == 1);
  CHECK(cli_run({"run-poet", "--config", "/nonexistent.json"}).code == 1);
}

TEST_CASE("run-poet, resume, eval and report") {
  auto dir = testing::scratch_dir("cli_run");
  const auto cfg = tiny_config_file(dir).string();
  const auto run_dir = (dir / "run").string();

  auto r = cli_run({"run-poet", "--config", cfg, "--generator", "stub", "--iterations", "2", "--population", "3",
                    "--seed", "7", "--out", run_dir});
  REQUIRE(r.code == 0);
  int checkpoints = 0;
  for (const auto& e : fs::directory_iterator(dir / "run" / "checkpoints")) checkpoints += e.is_regular_file();
  CHECK(checkpoints == 3);
  auto snap = load_run_config(dir / "run" / "config.snapshot");
  CHECK(snap.seed == 7);
  CHECK(snap.poet.population == 3);
  CHECK(snap.ppo.updates_per_poet_iter == 2);

  SUBCASE("resume of a finished run is a no-op") {
    auto again = cli_run({"run-poet", "--resume", run_dir});
    CHECK(again.code == 0);
    CHECK(again.out.find("already finished") != std::string::npos);
    CHECK(cli_run({"run-poet", "--resume", run_dir, "--seed", "3"}).code == 1);
    CHECK(cli_run({"run-poet", "--resume", (dir / "nothing").string()}).code == 1);
  }
  SUBCASE("resume from an older checkpoint") {
    auto again = cli_run({"run-poet", "--resume", poet::checkpoint_path(run_dir, 1).string()});
    CHECK(again.code == 0);
    CHECK(again.out.find("iter 2:") != std::string::npos);
  }
  SUBCASE("same directory twice is refused") {
    auto twice = cli_run({"run-poet", "--config", cfg, "--out", run_dir});
    CHECK(twice.code == 2);
    CHECK(twice.err.find("already holds a run") != std::string::npos);
  }
  SUBCASE("eval is reproducible") {
    auto e1 = cli_run({"eval", "--run", run_dir, "--repeats", "2", "--seed", "5"});
    REQUIRE(e1.code == 0);
    CHECK(fs::exists(dir / "run" / "eval_report.csv"));
    CHECK(fs::exists(dir / "run" / "eval_summary.json"));
    CHECK(fs::exists(dir / "run" / "eval_histogram.csv"));
    const auto csv = io::read_file(dir / "run" / "eval_report.csv");
    auto e2 = cli_run({"eval", "--run", run_dir, "--repeats", "2", "--seed", "5", "--out", (dir / "e2").string()});
    REQUIRE(e2.code == 0);
    CHECK(io::read_file(dir / "e2" / "eval_report.csv") == csv);
    auto rep = cli_run({"report", "--run", run_dir});
    CHECK(rep.code == 0);
    CHECK(rep.out.find("environments:") != std::string::npos);
    CHECK(rep.out.find("\"count\"") != std::string::npos);
  }
}

TEST_CASE("run-poet into an unwritable place exits 2") {
  auto dir = testing::scratch_dir("cli_unwritable");
  io::write_file_atomic(dir / "plain_file", "x");
  auto r = cli_run({"run-poet", "--config", tiny_config_file(dir).string(), "--out", (dir / "plain_file" / "run").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("eval on an empty run exits 1") {
  auto dir = testing::scratch_dir("cli_eval_empty");
  fs::create_directories(dir / "run" / "niche_history");
  io::write_file_atomic(dir / "run" / "config.snapshot", config_snapshot(RunConfig{}));
  CHECK(cli_run({"eval", "--run", (dir / "run").string()}).code == 1);
  CHECK(cli_run({"eval", "--run", (dir / "missing").string()}).code == 1);
}

TEST_CASE("gen-env") {
  auto dir = testing::scratch_dir("cli_gen");
  SUBCASE("stub writes a grid and sidecar") {
    auto r = cli_run({"gen-env", "--prompt", "roughness=0.3", "--out", (dir / "a.txt").string(), "--seed", "4"});
    REQUIRE(r.code == 0);
    auto g = grid::read_grid_file((dir / "a.txt").string());
    CHECK(g.width() == 100);
    CHECK(g.height() == 20);
    auto meta = json::parse(io::read_file(dir / "a.json"));
    CHECK(meta["generator"] == "stub");
    CHECK(meta["id"] == "a");
    auto again = cli_run({"gen-env", "--prompt", "roughness=0.3", "--seed", "4"});
    CHECK(again.out == grid::render_grid(g) + "\n");
  }
  SUBCASE("scripted LLM golden") {
    auto r = cli_run({"gen-env", "--generator", "llm", "--prompt", "flat", "--width", "12", "--height", "4"},
                     scripted_hooks());
    REQUIRE(r.code == 0);
    // "Create a 12*4 size environment. flat" has 36 characters -> hole at column 9
    CHECK(r.out == "------------\n------------\n---HH-------\nHHHHHHHHH-HH\n");
  }
  SUBCASE("bad sizes") {
    CHECK(cli_run({"gen-env", "--width", "0"}).code == 1);
    CHECK(cli_run({"gen-env", "--height", "-3"}).code == 1);
  }
  SUBCASE("LLM without a key") {
    if (!std::getenv(llm::kApiKeyEnvVar)) CHECK(cli_run({"gen-env", "--generator", "llm"}).code == 1);
  }
}

TEST_CASE("mutate-env") {
  auto dir = testing::scratch_dir("cli_mutate");
  const auto parent = (dir / "parent.txt").string();

  SUBCASE("stub mutation") {
    REQUIRE(cli_run({"gen-env", "--prompt", "roughness=0.1", "--out", parent}).code == 0);
    auto r = cli_run({"mutate-env", "--env", parent, "--seed", "2", "--out", (dir / "child.txt").string()});
    REQUIRE(r.code == 0);
    auto cm = json::parse(io::read_file(dir / "child.json"));
    CHECK(cm["generator"] == "stub");
    CHECK(cm["parent_id"] == "parent");
    CHECK(io::read_file(dir / "child.txt") != io::read_file(parent));
    CHECK(cli_run({"mutate-env", "--env", parent, "--force-branch", "same"}).code == 1);
    CHECK(cli_run({"mutate-env", "--env", parent, "--force-branch", "mutated"}).code == 1);
    CHECK(cli_run({"mutate-env", "--env", parent, "--force-branch", "sideways"}).code == 1);
  }
  SUBCASE("LLM branches") {
    const auto hooks = scripted_hooks();
    REQUIRE(cli_run({"gen-env", "--generator", "llm", "--prompt", "stairs", "--width", "12", "--height", "4", "--out",
                     parent},
                    hooks)
                .code == 0);
    auto same = cli_run({"mutate-env", "--env", parent, "--force-branch", "same", "--out", (dir / "s.txt").string()},
                        hooks);
    REQUIRE(same.code == 0);
    CHECK(same.out.find("branch: same") != std::string::npos);
    CHECK(json::parse(io::read_file(dir / "s.json"))["prompt"] == "stairs");

    auto mutated = cli_run(
        {"mutate-env", "--env", parent, "--force-branch", "mutated", "--out", (dir / "m.txt").string()}, hooks);
    REQUIRE(mutated.code == 0);
    CHECK(json::parse(io::read_file(dir / "m.json"))["prompt"] == "stairs with gaps");
    CHECK(json::parse(io::read_file(dir / "m.json"))["parent_id"] == "parent");

    auto a = cli_run({"mutate-env", "--env", parent, "--seed", "11"}, hooks);
    auto b = cli_run({"mutate-env", "--env", parent, "--seed", "11"}, hooks);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }
  SUBCASE("missing parent") { CHECK(cli_run({"mutate-env", "--env", (dir / "none.txt").string()}).code == 1); }
}

TEST_CASE("dataset-export") {
  auto dir = testing::scratch_dir("cli_dataset");
  fs::create_directories(dir / "pairs");
  io::write_file_atomic(dir / "pairs" / "a.txt", "----------\nHHHHHHHHHH\n");
  io::write_file_atomic(dir / "pairs" / "a.json", R"({"caption": "flat terrain"})");
  io::write_file_atomic(dir / "pairs" / "b.txt", "------------\nHHHHHHHHH-HH\n");
  io::write_file_atomic(dir / "pairs" / "b.json", R"({"caption": "one gap"})");

  auto r = cli_run({"dataset-export", "--dir", (dir / "pairs").string(), "--out", (dir / "out.jsonl").string()});
  REQUIRE(r.code == 0);
  auto lines = jsonl_lines(dir / "out.jsonl");
  REQUIRE(lines.size() == 2);
  // round trip: every line parses back to its caption and grid
  std::map<std::string, std::string> back;
  for (const auto& l : lines) {
    auto j = json::parse(l);
    std::string caption, grid_text;
    for (const auto& m : j["messages"]) {
      if (m["role"] == "user") caption = m["content"];
      if (m["role"] == "assistant") grid_text = m["content"];
    }
    back[caption] = grid_text;
  }
  CHECK(grid::parse_grid(back.at("flat terrain")) == grid::parse_grid("----------\nHHHHHHHHHH"));
  CHECK(grid::parse_grid(back.at("one gap")) == grid::parse_grid("------------\nHHHHHHHHH-HH"));

  io::write_file_atomic(dir / "pairs" / "b.json", R"({"caption": "flat terrain"})");
  CHECK(cli_run({"dataset-export", "--dir", (dir / "pairs").string(), "--out", (dir / "dup.jsonl").string()}).code == 1);
  CHECK(cli_run({"dataset-export", "--dir", (dir / "pairs").string(), "--out", (dir / "dup.jsonl").string(),
                 "--allow-dup"})
            .code == 0);

  SUBCASE("bundled seed dataset") {
    auto s = cli_run({"dataset-export", "--dir", std::string(LLMPOET_DATA_DIR) + "/seed_dataset", "--out",
                      (dir / "seed.jsonl").string()});
    CHECK(s.code == 0);
    CHECK(jsonl_lines(dir / "seed.jsonl").size() == 20);
  }
}
