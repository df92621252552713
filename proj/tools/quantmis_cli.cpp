//
// Copyright 2026 The quantmis Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// quantmis command-line driver.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "quantmis/runner.hpp"

namespace {

namespace fs = std::filesystem;
using quantmis::Error;
using quantmis::ErrorKind;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int parallel = 1;
  bool resume = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f, bool needs_config) {
  auto* opt = cmd->add_option("--config", f.config, "Experiment config (JSON)")
                  ->check(CLI::ExistingFile);
  if (needs_config) opt->required();
  cmd->add_option("--out", f.out,
                  "Output directory (overrides QUANTMIS_OUT and the config)");
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config)");
  cmd->add_option("--parallel", f.parallel, "Worker threads")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--resume", f.resume, "Recompute runs left incomplete");
  cmd->add_flag("--quiet", f.quiet, "Suppress progress messages");
}

std::string resolve_out(const Flags& f, const std::string& from_config) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("QUANTMIS_OUT"); env != nullptr && *env) {
    return env;
  }
  return from_config;
}

quantmis::Experiment make_experiment(const Flags& f) {
  quantmis::ExperimentConfig cfg;
  if (!f.config.empty()) {
    cfg = quantmis::load_config(f.config);
  } else {
    const fs::path dir = resolve_out(f, "");
    quantmis::require(!dir.empty(), ErrorKind::kConfig,
                      "pass --config or --out pointing at an artifact directory");
    quantmis::require(fs::exists(dir / "config.json"), ErrorKind::kNotFound,
                      "no config.json in " + dir.string());
    cfg = quantmis::load_config(dir / "config.json");
  }
  cfg.output_dir = resolve_out(f, cfg.output_dir);
  if (f.seed) cfg.master_seed = *f.seed;
  return quantmis::Experiment(cfg, {f.parallel, f.resume, f.quiet});
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidSpec:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership-inference privacy scoring of quantized models"};
  app.require_subcommand(1);
  Flags f;

  struct Command {
    const char* name;
    const char* help;
    bool needs_config;
    std::function<void(quantmis::Experiment&)> action;
  };
  const std::vector<Command> commands = {
      {"gen-data", "Sample and write the per-run datasets", true,
       [](auto& e) { e.gen_data(); }},
      {"train-probe", "Train every run and record quantized validation losses", true,
       [](auto& e) { e.train_probe(); }},
      {"estimate-r", "Compute r-scores from recorded losses", true,
       [](auto& e) { e.estimate_r(); }},
      {"baseline-mis", "Estimate MIS with the discriminator baseline", true,
       [](auto& e) { e.baseline_mis(); }},
      {"rank", "Write rankings and stability tables", false,
       [](auto& e) { e.emit_report_files(false); }},
      {"report", "Write every report table", false,
       [](auto& e) { e.emit_report_files(true); }},
      {"all", "Run the whole pipeline", true, [](auto& e) { e.all(); }},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, f, c.needs_config);
    subs.push_back(sub);
  }

  // The oracle runs either the config's tasks or a single task file.
  std::string task_file;
  std::vector<int> n_values;
  auto* oracle = app.add_subcommand("oracle", "Exact MIS for small discrete tasks");
  add_common(oracle, f, false);
  oracle->add_option("--task", task_file, "DiscreteTask JSON; prints the rate curve")
      ->check(CLI::ExistingFile);
  oracle->add_option("--n", n_values, "Sample sizes for --task")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (oracle->parsed()) {
      if (!task_file.empty()) {
        quantmis::require(!n_values.empty(), ErrorKind::kConfig,
                          "--task needs --n");
        quantmis::DiscreteTask task;
        try {
          task = nlohmann::json::parse(quantmis::read_text(task_file))
                     .get<quantmis::DiscreteTask>();
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorKind::kConfig, std::string("bad task file: ") + e.what());
        } catch (const Error& e) {
          throw Error(ErrorKind::kConfig, e.message());
        }
        std::cout << "n,mis,rate\n";
        for (const auto& p : quantmis::rate_curve(task, n_values)) {
          std::cout << p.n << "," << quantmis::format_double(p.mis) << ","
                    << quantmis::format_double(p.rate) << "\n";
        }
        return kExitOk;
      }
      quantmis::require(!f.config.empty(), ErrorKind::kConfig,
                        "oracle needs --config or --task");
      auto exp = make_experiment(f);
      exp.oracle();
      return kExitOk;
    }
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      auto exp = make_experiment(f);
      commands[i].action(exp);
    }
  } catch (const Error& e) {
    std::cerr << "quantmis: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "quantmis: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
