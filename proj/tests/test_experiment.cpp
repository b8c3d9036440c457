#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "samkit/error.hpp"
#include "samkit/experiment.hpp"

using namespace samkit;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"(seed = 3
[data]
source = synthetic
[synthetic]
horizon_hours = 240
campaigns = a, b
[synthetic.campaign.a]
cvr = 2, 20
scale = 20
price_cap = 200
rate = 15
[synthetic.campaign.b]
cvr = 1, 15
scale = 6
price_cap = 60
rate = 20
[experiment]
strategies = truth, lin
[em]
mc_repetitions = 10
mc_volume = 200
)";

std::string config_error(const std::string& text) {
  try {
    load_experiment(ConfigFile::parse(text, "cfg"));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    return e.what();
  }
  return {};
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("samkit_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing with sections and comments") {
  const auto cf = ConfigFile::parse("a = 1 # c\n[s]\nb = x, y\n; note\nc.d = 2\n");
  CHECK(cf.find("a")->value == "1");
  CHECK(cf.find("s.b")->value == "x, y");
  CHECK(cf.find("s.c.d")->line == 5);
}

TEST_CASE("config syntax errors report the line") {
  CHECK_THROWS_WITH_AS(ConfigFile::parse("a = 1\nbroken\n", "f"), doctest::Contains("f:2"), Error);
  CHECK_THROWS_WITH_AS(ConfigFile::parse("[x\n", "f"), doctest::Contains("f:1"), Error);
  CHECK_THROWS_WITH_AS(ConfigFile::parse("a = 1\na = 2\n", "f"), doctest::Contains("f:2"), Error);
}

TEST_CASE("config field errors name the field and line") {
  const std::string e1 = config_error(std::string(kBase) + "[em]\n");
  CHECK(e1.empty());
  CHECK(config_error("[experiment]\nstrategies = truth\n").find("data.source") != std::string::npos);
  const std::string bad_num = config_error(std::string(kBase) + "[rounds]\nperiod_hours = six\n");
  CHECK(bad_num.find("rounds.period_hours") != std::string::npos);
  CHECK(bad_num.find("cfg:23") != std::string::npos);
  CHECK(config_error(std::string(kBase) + "[experiment2]\nx = 1\n").find("unknown field") != std::string::npos);
  CHECK(config_error(std::string(kBase) + "[replay]\ninflation = 0:-1\n").find("replay.inflation") != std::string::npos);
  CHECK(config_error(std::string(kBase) + "[frontier]\nalphas = 1, -2\n").find("frontier.alphas") != std::string::npos);
  std::string no_strat = kBase;
  no_strat.replace(no_strat.find("strategies = truth, lin"), 23, "strategies = ");
  CHECK(config_error(no_strat).find("experiment.strategies") != std::string::npos);
  std::string bad_strat = kBase;
  bad_strat.replace(bad_strat.find("truth, lin"), 10, "truth, opt");
  CHECK(config_error(bad_strat).find("experiment.strategies") != std::string::npos);
}

TEST_CASE("report format: header, row count, blank margin") {
  CHECK(std::string(kReportHeader) == "strategy,selection,payoff,divisor,profit,margin,bids,imps,convs,cost");
  SweepRow row{StrategyKind::Const, SelectionScheme{}, 4, 10.0, {}, {}};
  const auto text = format_report({row}, PayoffMode::Hard);
  CHECK(text == std::string(kReportHeader) + "\nconst,uniform,hard,4,0.000000,,0,0,0,0.000000\n");
}

TEST_CASE("run writes all artifacts with rows for every divisor and strategy") {
  const auto dir = temp_dir("run");
  auto cf = ConfigFile::parse(kBase);
  cf.set("output.dir", dir.string());
  cf.set("replay.trace", "true");
  const auto cfg = load_experiment(cf);
  const auto res = execute(Command::Run, cfg);
  CHECK(res.exit_code == 0);
  CHECK_FALSE(res.partial);
  for (const char* f : {"report.csv", "em_trace.json", "rounds.csv", "status.json", "trace.csv"}) CHECK(fs::exists(dir / f));
  const auto rows = csv(slurp(dir / "report.csv"));
  REQUIRE(rows.size() == 1 + 8 * 2);
  CHECK(rows[0].size() == 10);

  // Every report cell is recomputable from the per-auction trace.
  std::map<std::string, std::vector<double>> agg;  // key -> profit, bids, imps, convs, cost
  const auto trace = csv(slurp(dir / "trace.csv"));
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& t = trace[i];
    auto& a = agg[t[0] + "," + t[1] + "," + t[2]];
    a.resize(5, 0.0);
    const double bid = std::stod(t[7]);
    a[0] += std::stod(t[11]) - std::stod(t[12]);
    a[1] += bid > 0.0;
    a[2] += t[9] == "1";
    a[3] += t[9] == "1" && t[10] == "1";
    a[4] += std::stod(t[12]);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& a = agg[r[0] + "," + r[1] + "," + r[3]];
    REQUIRE(a.size() == 5);
    CHECK(std::stod(r[4]) == doctest::Approx(a[0]).epsilon(1e-6));
    CHECK(std::stod(r[6]) == a[1]);
    CHECK(std::stod(r[7]) == a[2]);
    CHECK(std::stod(r[8]) == a[3]);
    CHECK(std::stod(r[9]) == doctest::Approx(a[4]).epsilon(1e-6));
  }
  fs::remove_all(dir);
}

TEST_CASE("validate reports parse statistics without writing") {
  const auto dir = temp_dir("validate");
  auto cf = ConfigFile::parse(kBase);
  cf.set("output.dir", dir.string());
  const auto res = execute(Command::Validate, load_experiment(cf));
  CHECK(res.message.find("config ok") != std::string::npos);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("gen and log sources round-trip") {
  const auto dir = temp_dir("gen");
  auto cf = ConfigFile::parse(kBase);
  cf.set("output.dir", dir.string());
  cf.set("gen.path", "market.tsv");
  execute(Command::Gen, load_experiment(cf));
  REQUIRE(fs::exists(dir / "market.tsv"));

  std::string log_cfg = kBase;
  log_cfg = log_cfg.substr(log_cfg.find("[experiment]"));
  log_cfg = "seed = 3\n[data]\nsource = log\npath = " + (dir / "market.tsv").string() + "\n" + log_cfg;
  auto lf = ConfigFile::parse(log_cfg);
  lf.set("output.dir", (dir / "from_log").string());
  execute(Command::Sweep, load_experiment(lf));
  cf.set("output.dir", (dir / "from_synth").string());
  execute(Command::Sweep, load_experiment(cf));
  CHECK(slurp(dir / "from_log" / "report.csv") == slurp(dir / "from_synth" / "report.csv"));
  fs::remove_all(dir);
}

TEST_CASE("frontier: alpha zero is the greedy vertex, single points included") {
  PortfolioEstimate est;
  est.margins = {{0.5, 0.4, 10, false}, {0.3, 0.1, 10, false}, {0.2, 0.05, 10, false}};
  est.beta = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto pts = efficient_frontier(est, {0.0, 1.0, 5.0});
  REQUIRE(pts.size() == 6);
  CHECK(pts[0].alpha == 5.0);
  CHECK(pts[2].alpha == 0.0);
  CHECK(pts[2].v == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(pts[3].kind == "single");
  for (std::size_t i = 1; i < 3; ++i) CHECK(pts[i].sigma >= pts[i - 1].sigma);
  const auto text = format_frontier(pts, {"a", "b", "c"});
  CHECK(text.rfind("kind,alpha,mu_p,sigma_p,v_a,v_b,v_c\n", 0) == 0);
}

TEST_CASE("frontier reaches zero risk for a perfect hedge") {
  PortfolioEstimate est;
  est.margins = {{0.3, 0.2, 10, false}, {0.3, 0.2, 10, false}};
  est.beta = {{1, -1}, {-1, 1}};
  const auto pts = efficient_frontier(est, {0.5, 10.0});
  CHECK(pts[0].sigma < 1e-8);
}

TEST_CASE("frontier shifts weight toward the low-risk campaign as alpha grows") {
  PortfolioEstimate est;
  est.margins = {{0.6, 0.5, 10, false}, {0.4, 0.2, 10, false}, {0.3, 0.05, 10, false}, {0.35, 0.3, 10, false}};
  est.beta = {{1, 0.2, 0.1, 0.0}, {0.2, 1, 0.1, 0.3}, {0.1, 0.1, 1, 0.0}, {0.0, 0.3, 0.0, 1}};
  const auto pts = efficient_frontier(est, {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0});
  // Points are alpha-descending; weight on campaign 2 (lowest sigma) must not increase along the list.
  for (std::size_t i = 1; i < 7; ++i) CHECK(pts[i].v[2] <= pts[i - 1].v[2] + 1e-9);
  // Each point is optimal against a dense simplex grid for its alpha.
  Eigen::MatrixXd beta(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) beta(i, j) = est.beta[i][j];
  const PortfolioModel model({0.6, 0.4, 0.3, 0.35}, {0.5, 0.2, 0.05, 0.3}, beta);
  const int n = 50;
  for (std::size_t k = 0; k < 7; ++k) {
    const double a = pts[k].alpha;
    double best = -1e300;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; i + j <= n; ++j)
        for (int l = 0; i + j + l <= n; ++l) {
          const double x = double(i) / n, y = double(j) / n, z = double(l) / n;
          best = std::max(best, selection_objective(model, SelectionVector({x, y, z, std::max(0.0, 1.0 - x - y - z)}), a));
        }
    CHECK(selection_objective(model, SelectionVector(pts[k].v), a) >= best - 1e-12);
  }
}

TEST_CASE("commands by name") {
  CHECK(command_from_string("frontier") == Command::Frontier);
  CHECK_THROWS_AS(command_from_string("plot"), Error);
}
