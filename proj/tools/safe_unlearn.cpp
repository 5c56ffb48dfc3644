// Command-line front end: run | verify | sweep.

#include "safe/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

safe::RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                            const std::optional<bool>& oracle) {
  safe::Json j = path.empty() ? safe::Json::object() : safe::read_json_file(path);
  if (seed) j["seed"] = *seed;
  if (oracle) j["evaluation"]["oracle"] = *oracle;
  return safe::run_config_from_json(j);
}

void print_error(const char* kind, const std::string& what, int code) {
  const safe::Json rec = {{"type", "error"}, {"kind", kind}, {"message", what}, {"exit_code", code}};
  std::cerr << rec.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming machine unlearning with the SAFE update"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_path = "safe_run.jsonl";
  std::optional<std::uint64_t> seed;
  bool oracle_on = false;
  bool oracle_off = false;
  bool timing = true;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)");
    cmd->add_option("-o,--output", output_path, "JSONL output path")->capture_default_str();
    cmd->add_option("--seed", seed, "Override the master seed");
    cmd->add_flag("--oracle", oracle_on, "Enable the retrain oracle");
    cmd->add_flag("--no-oracle", oracle_off, "Disable the retrain oracle");
    cmd->add_flag("!--no-timing", timing, "Skip the <output>.timing.jsonl sidecar");
  };
  CLI::App* run = app.add_subcommand("run", "Stream deletion requests through the unlearner");
  CLI::App* verify = app.add_subcommand("verify", "Run with the oracle and check every equivalence each round");
  CLI::App* sweep = app.add_subcommand("sweep", "Repeat the run over the configured K values");
  add_common(run);
  add_common(verify);
  add_common(sweep);

  CLI11_PARSE(app, argc, argv);

  try {
    std::optional<bool> oracle;
    if (oracle_on) oracle = true;
    if (oracle_off) oracle = false;
    const safe::RunConfig config = load_config(config_path, seed, oracle);

    if (sweep->parsed()) {
      for (const auto& path : safe::run_sweep(config, output_path)) std::cout << path.string() << '\n';
      return 0;
    }
    std::ofstream out(output_path);
    if (!out) throw safe::InputError("cannot write " + output_path);
    std::ofstream timing_out;
    if (timing) timing_out.open(output_path + ".timing.jsonl");
    const safe::RunMode mode = verify->parsed() ? safe::RunMode::kVerify : safe::RunMode::kRun;
    const safe::RunResult result =
        safe::run_experiment(config, mode, &out, timing_out.is_open() ? &timing_out : nullptr);
    std::cout << safe::summary_to_json(result).dump(2) << '\n';
    if (!result.verify_passed) {
      print_error("verify", "oracle-equivalence check failed; see the verify fields in " + output_path, 3);
      return static_cast<int>(safe::ExitCode::kNumerical);
    }
    return 0;
  } catch (const safe::Error& e) {
    print_error(e.kind(), e.what(), static_cast<int>(e.code()));
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    print_error("internal", e.what(), 3);
    return static_cast<int>(safe::ExitCode::kNumerical);
  }
}
