// Command-line experiment runner.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gsvie/cli/experiment.hpp"
#include "gsvie/cli/runner.hpp"
#include "gsvie/parallel.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string inject;
};

gsvie::cli::ExperimentConfig load(const std::string& kind, const Options& o) {
  using gsvie::cli::Json;
  Json j = Json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw gsvie::cli::ConfigError("cannot open config file '" + o.config + "'");
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw gsvie::cli::ConfigError("config '" + o.config + "' is not valid JSON: " + e.what());
    }
  } else if (kind != "verify") {
    throw gsvie::cli::ConfigError("--config is required for '" + kind + "'");
  }
  if (!j.is_object()) throw gsvie::cli::ConfigError("config must be a JSON object");
  if (!j.contains("study")) j["study"] = Json::object();
  if (!j["study"].is_object()) throw gsvie::cli::ConfigError("study must be a JSON object");
  if (!j["study"].contains("kind")) {
    j["study"]["kind"] = kind;
  } else if (j["study"]["kind"] != kind) {
    throw gsvie::cli::ConfigError("study.kind in the config does not match the '" + kind + "' subcommand");
  }
  if (!o.inject.empty()) j["study"]["inject"] = o.inject;
  if (o.seed) j["monte_carlo"]["master_seed"] = *o.seed;
  if (!o.out.empty()) j["output"]["directory"] = o.out;
  return gsvie::cli::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sublinear-expectation Monte Carlo and G-driven Volterra equation experiments"};
  app.set_version_flag("--version", GSVIE_VERSION);
  app.require_subcommand(1);
  Options opt;
  std::string chosen;
  for (const char* kind : {"solve", "expect", "converge", "sweep", "holder", "verify"}) {
    CLI::App* sub = app.add_subcommand(kind, std::string("run the ") + kind + " study");
    sub->add_option("--config", opt.config, "experiment config (JSON)");
    sub->add_option("--out", opt.out, "output directory (overrides output.directory)");
    sub->add_option("--seed", opt.seed, "master seed (overrides monte_carlo.master_seed)");
    sub->add_option("--threads", opt.threads, "worker thread cap; results do not depend on it")
        ->check(CLI::PositiveNumber);
    if (std::string(kind) == "verify")
      sub->add_option("--inject", opt.inject, "deliberately broken fixture")->check(CLI::IsMember({"lipschitz-violation"}));
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (opt.threads) gsvie::set_max_threads(*opt.threads);
    const auto cfg = load(chosen, opt);
    const auto result = gsvie::cli::run_study(cfg);
    if (result.exit_code == gsvie::cli::kContractViolation) {
      std::cerr << "gsvie verify: contract violation in";
      for (const auto& name : result.failed_checks) std::cerr << ' ' << name;
      std::cerr << '\n';
    }
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "gsvie " << chosen << ": " << e.what() << '\n';
    return gsvie::cli::kRuntimeError;
  }
}
