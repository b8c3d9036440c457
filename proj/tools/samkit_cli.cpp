// samkit command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "samkit/samkit.h"

namespace {

int exit_code(samkit_status st) {
  switch (st) {
    case SAMKIT_OK:
      return 0;
    case SAMKIT_ERR_CONFIG:
    case SAMKIT_ERR_INVALID_ARGUMENT:
      return 2;
    case SAMKIT_ERR_PARSE:
    case SAMKIT_ERR_IO:
      return 3;
    case SAMKIT_ERR_PARTIAL:
      return 4;
    default:
      return 1;
  }
}

int report(samkit_status st, const char* context) {
  std::fprintf(stderr, "samkit: %s: %s: %s\n", context, samkit_status_string(st), samkit_last_error());
  return exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistical arbitrage mining for RTB campaigns"};
  app.set_version_flag("--version", std::string(samkit_version()));
  app.require_subcommand(1, 1);

  std::string config;
  std::string out_dir;
  long long seed = 0;
  bool cpm = false;
  bool trace = false;
  bool clicks = false;

  const char* verbs[][2] = {
      {"run", "train, replay the budget sweep and dynamic rounds; write report.csv, em_trace.json, rounds.csv"},
      {"sweep", "budget sweep only: report.csv and em_trace.json"},
      {"dynamic", "dynamic re-training rounds against a single static round: rounds.csv"},
      {"frontier", "efficient frontier of campaign selection over the alpha grid: frontier.csv"},
      {"gen", "write the configured synthetic market as a TSV log"},
      {"validate", "check the config and the data source without writing artifacts"},
  };
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v[0], v[1]);
    sub->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
    sub->add_flag("--cpm", cpm, "log prices are CPM quotes");
    sub->add_flag("--trace", trace, "also write the per-auction trace.csv");
    sub->add_flag("--clicks-as-conversions", clicks, "the converted column holds clicks");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string verb = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();

  samkit_experiment* exp = nullptr;
  samkit_status st = samkit_experiment_load(config.c_str(), &exp);
  if (st != SAMKIT_OK) return report(st, config.c_str());

  auto set = [&](const char* key, const std::string& value) {
    if (st != SAMKIT_OK) return;
    st = samkit_experiment_set(exp, key, value.c_str());
  };
  if (sub->count("--out")) set("output.dir", out_dir);
  if (sub->count("--seed")) set("seed", std::to_string(seed));
  if (cpm) set("data.cpm", "true");
  if (trace) set("replay.trace", "true");
  if (clicks) set("data.clicks_as_conversions", "true");
  if (st != SAMKIT_OK) {
    samkit_experiment_free(exp);
    return report(st, "override");
  }

  st = samkit_experiment_execute(exp, verb.c_str());
  int code = 0;
  if (st == SAMKIT_OK) {
    const char* msg = samkit_experiment_message(exp);
    if (msg && *msg) std::printf("%s\n", msg);
    for (size_t i = 0; i < samkit_experiment_artifact_count(exp); ++i)
      std::printf("wrote %s\n", samkit_experiment_artifact(exp, i));
  } else {
    for (size_t i = 0; i < samkit_experiment_artifact_count(exp); ++i)
      std::printf("wrote %s (partial)\n", samkit_experiment_artifact(exp, i));
    code = report(st, verb.c_str());
  }
  samkit_experiment_free(exp);
  return code;
}
