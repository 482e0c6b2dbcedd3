#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nsdg/cli.hpp"
#include "nsdg/io.hpp"
#include "support.hpp"

using namespace nsdg;
namespace fs = std::filesystem;

namespace {

std::string golden(const std::string& name) { return std::string(NSDG_SOURCE_DIR) + "/specs/golden/" + name + ".json"; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "nsdg_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Invocation invocation(const std::string& command, const std::string& config, const fs::path& out) {
  Invocation inv;
  inv.command = command;
  inv.config = config;
  inv.out_dir = out.string();
  return inv;
}

std::string write_doc(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  const std::string path = (dir / name).string();
  write_json_file(path, j);
  return path;
}

}  // namespace

TEST_CASE("config digest and schedule parsing") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(parse_schedule("0.2,0.1,0.05") == std::vector<double>{0.2, 0.1, 0.05});
  CHECK_THROWS_AS(parse_schedule("0.2,,0.1"), ConfigError);
  CHECK_THROWS_AS(parse_schedule("0.2,-1"), ConfigError);
  CHECK_THROWS_AS(parse_schedule("abc"), ConfigError);
}

TEST_CASE("config loading") {
  const fs::path dir = scratch("config");

  SUBCASE("missing file names the path") {
    const RunReport r = run_command(invocation("solve", "/no/such/config.json", dir));
    CHECK(r.exit_code == kExitUsage);
    CHECK(r.message.find("/no/such/config.json") != std::string::npos);
  }
  SUBCASE("parse error carries a location") {
    const std::string path = (dir / "broken.json").string();
    write_text_file(path, "{\"spec\": \n");
    const RunReport r = run_command(invocation("solve", path, dir));
    CHECK(r.exit_code == kExitUsage);
    CHECK(r.message.find("byte") != std::string::npos);
  }
  SUBCASE("run document referencing a spec") {
    const std::string path =
        write_doc(dir, "run.json", {{"spec", golden("frozen")}, {"numerics", {{"M", 8}, {"seed", 7}}}});
    const RunConfig cfg = load_config(path);
    CHECK(cfg.spec.name == "frozen");
    CHECK(cfg.numerics.M == 8);
    CHECK(cfg.numerics.seed == 7);
    CHECK(cfg.numerics.J == 80);  // from the game document's own block
    CHECK(cfg.digest != load_config(golden("frozen")).digest);
  }
  SUBCASE("unknown numerics key and non-positive values") {
    CHECK_THROWS_WITH_AS(load_config(write_doc(dir, "a.json", {{"spec", golden("frozen")}, {"numerics", {{"Mx", 8}}}})),
                         doctest::Contains("unknown key 'Mx'"), ConfigError);
    CHECK_THROWS_AS(load_config(write_doc(dir, "b.json", {{"spec", golden("frozen")}, {"numerics", {{"M", 0}}}})),
                    ConfigError);
    CHECK_THROWS_AS(
        load_config(write_doc(dir, "c.json", {{"spec", golden("frozen")}, {"numerics", {{"scenario_count", -1}}}})),
        ConfigError);
  }
  SUBCASE("CFL precheck suggests M") {
    const std::string path = write_doc(dir, "cfl.json", {{"spec", golden("remark51")}, {"numerics", {{"pde_M", 4}}}});
    const RunReport r = run_command(invocation("solve", path, dir));
    CHECK(r.exit_code == kExitUsage);
    CHECK(r.message.find("suggested M") != std::string::npos);
  }
  SUBCASE("digest is stable") { CHECK(load_config(golden("remark51")).digest == load_config(golden("remark51")).digest); }
}

TEST_CASE("solve on the frozen spec writes W = x") {
  const fs::path out = scratch("solve_frozen");
  const RunReport r = run_command(invocation("solve", golden("frozen"), out));
  REQUIRE(r.exit_code == kExitOk);
  CHECK(std::find(r.files.begin(), r.files.end(), "fields.csv") != r.files.end());
  CHECK(std::find(r.files.begin(), r.files.end(), "solve.json") != r.files.end());
  std::ifstream in(out / "fields.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,t,j,x,W1,W2,W1p,W2p");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::vector<double> cells;
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(std::stod(c));
    REQUIRE(cells.size() == 8);
    for (int a = 4; a < 8; ++a) CHECK(cells[static_cast<std::size_t>(a)] == doctest::Approx(cells[3]).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("solve on remark51 records zero Isaacs gaps") {
  const fs::path out = scratch("solve_remark51");
  Invocation inv = invocation("solve", golden("remark51"), out);
  inv.orientation = "p1";
  inv.upper = true;
  const RunReport r = run_command(inv);
  REQUIRE(r.exit_code == kExitOk);
  const nlohmann::json j = read_json_file((out / "solve.json").string());
  CHECK(j.at("isaacs").at("gap_lower").get<double>() == 0.0);
  CHECK(j.at("isaacs").at("gap_upper").get<double>() == 0.0);
  CHECK(j.at("verdicts").at("validate") == "PASS");
  CHECK(j.at("upper_vs_lower").at(0).at("sup_upper_minus_lower").get<double>() == 0.0);
  CHECK(j.at("files").size() == 2);
}

TEST_CASE("verify dispatch") {
  const fs::path out = scratch("verify");
  SUBCASE("unknown check lists valid names") {
    Invocation inv = invocation("verify", golden("frozen"), out);
    inv.check = "nonsense";
    const RunReport r = run_command(inv);
    CHECK(r.exit_code == kExitUsage);
    for (const auto& n : verify_checks()) CHECK(r.message.find(n) != std::string::npos);
  }
  SUBCASE("decouple on golden specs") {
    for (const char* name : {"remark51", "generic-small"}) {
      Invocation inv = invocation("verify", golden(name), out);
      inv.check = "decouple";
      inv.seeds = 3;
      const RunReport r = run_command(inv);
      CHECK(r.exit_code == kExitOk);
      CHECK(r.body.at("result").at("value").get<double>() <= 1e-9);
    }
  }
  SUBCASE("dpp on frozen") {
    Invocation inv = invocation("verify", golden("frozen"), out);
    inv.check = "dpp";
    const RunReport r = run_command(inv);
    CHECK(r.exit_code == kExitOk);
    for (const auto& l : r.body.at("result").at("values_by_grid")) CHECK(l.at("residual").get<double>() <= 1e-8);
  }
  SUBCASE("comparison suite") {
    Invocation inv = invocation("verify", golden("frozen"), out);
    inv.check = "comparison";
    inv.seeds = 50;
    const RunReport r = run_command(inv);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.body.at("result").at("violations") == 0);
    CHECK(r.body.at("result").at("instances") == 50);
  }
}

TEST_CASE("nash preconditions") {
  const fs::path out = scratch("nash_pre");
  SUBCASE("Isaacs failure exits 3 with gap statistics") {
    nlohmann::json j = testing::base_spec_json();
    j["controls"] = {{"U", {0.0, 1.0}}, {"V", {0.0, 1.0}}};
    j["ftilde_1"] = "(u - v)*(u - v)";
    j["coefficient_bound"] = 2.0;
    Invocation inv = invocation("nash", write_doc(out, "gap.json", j), out);
    inv.mode = "find";
    const RunReport r = run_command(inv);
    CHECK(r.exit_code == kExitPrecondition);
    CHECK(r.message.find("gap_lower") != std::string::npos);
    CHECK(r.body.at("precondition").at("gap_lower").get<double>() > 0.0);
  }
  SUBCASE("missing coefficient bound exits 3") {
    Invocation inv = invocation("nash", write_doc(out, "nobound.json", testing::base_spec_json()), out);
    inv.mode = "find";
    CHECK(run_command(inv).exit_code == kExitPrecondition);
  }
  SUBCASE("check without a pair file is a usage error") {
    Invocation inv = invocation("nash", golden("generic-small"), out);
    inv.mode = "check";
    CHECK(run_command(inv).exit_code == kExitUsage);
  }
}

TEST_CASE("nash find and check round trip") {
  const fs::path out = scratch("nash_trip");
  Invocation inv = invocation("nash", golden("constant-terminal"), out);
  inv.mode = "find";
  const RunReport f = run_command(inv);
  REQUIRE(f.exit_code == kExitOk);
  CHECK(f.body.at("payoff").at("e1").get<double>() == 0.7);
  CHECK(f.body.at("payoff").at("e2").get<double>() == 0.7);
  for (const char* file : {"nash.json", "certificate.json", "pair.json"}) CHECK(fs::exists(out / file));

  inv.mode = "check";
  inv.pair = (out / "pair.json").string();
  inv.out_dir = (out / "check").string();
  const RunReport c = run_command(inv);
  CHECK(c.exit_code == kExitOk);
  CHECK(c.verdicts.at(0).second == "PASS");

  const std::string bad = write_doc(out, "bad.json", {{"constant", {{"u", 9}, {"v", 0}}}});
  inv.pair = bad;
  CHECK(run_command(inv).exit_code == kExitUsage);
}

TEST_CASE("report summarizes a directory deterministically") {
  const fs::path out = scratch("report");
  Invocation inv = invocation("verify", golden("frozen"), out);
  inv.check = "semigroup-flow";
  inv.seeds = 1;
  REQUIRE(run_command(inv).exit_code == kExitOk);
  Invocation rep;
  rep.command = "report";
  rep.dir = out.string();
  const RunReport r = run_command(rep);
  CHECK(r.exit_code == kExitOk);
  const std::string csv = slurp(out / "summary.csv");
  CHECK(csv.rfind("file,command,check,verdict,config_digest\n", 0) == 0);
  CHECK(csv.find("verify_semigroup-flow.json,verify semigroup-flow,semigroup-flow,PASS,") != std::string::npos);
  const std::string first = slurp(out / "summary.json");
  run_command(rep);
  CHECK(slurp(out / "summary.json") == first);

  rep.dir = (out / "missing").string();
  CHECK(run_command(rep).exit_code == kExitUsage);
}

TEST_CASE("output directory override") {
  const fs::path out = scratch("env");
  Invocation inv;
  inv.command = "verify";
  inv.check = "decouple";
  inv.config = golden("frozen");
  inv.seeds = 1;
  ::setenv(kOutDirVariable, out.string().c_str(), 1);
  const RunReport r = run_command(inv);
  ::unsetenv(kOutDirVariable);
  CHECK(r.exit_code == kExitOk);
  CHECK(fs::exists(out / "verify_decouple.json"));
}
