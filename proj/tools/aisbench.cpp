// Copyright 2026 The AIS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// aisbench: run one experiment config, sweep a preset grid, or run the invariant checks.
//
// Exit status: 0 on success, 1 on bad input or I/O failure, 2 when some run failed
// (rows flagged run_error) or an invariant check failed.

#include <omp.h>

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ais/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::string preset = "desk";
  int threads = 0;
};

void apply_overrides(ais::ExperimentConfig& cfg, const Flags& flags) {
  if (flags.seed) {
    cfg.base_seed = *flags.seed;
  }
  if (flags.replicates) {
    cfg.replicates = *flags.replicates;
  }
  if (!flags.out.empty()) {
    cfg.output_dir = flags.out;
  }
  cfg.validate();
}

// Copy of `base` moved to dimension `dim`; location vectors are rebroadcast from their first entry.
ais::ExperimentConfig at_dimension(ais::ExperimentConfig base, Eigen::Index dim) {
  if (base.dim != dim) {
    const double mu = base.mu_star.size() > 0 ? base.mu_star[0] : 5.0;
    const double q0 = base.q0_location.size() > 0 ? base.q0_location[0] : 0.0;
    base.dim = dim;
    base.mu_star = ais::Vector::Constant(dim, mu);
    base.q0_location = ais::Vector::Constant(dim, q0);
  }
  base.validate();
  return base;
}

bool any_run_error(const std::vector<ais::ResultRow>& rows) {
  for (const auto& r : rows) {
    if ((r.warnings & ais::kRunError) != 0U) {
      return true;
    }
  }
  return false;
}

void print_final_mse(const std::vector<ais::MseRow>& mse, std::size_t final_budget) {
  std::cout << std::left << std::setw(10) << "method" << std::setw(22) << "variant" << std::setw(5)
            << "dim" << std::setw(14) << "log10 MSE" << "failed\n";
  for (const auto& m : mse) {
    if (m.budget != final_budget) {
      continue;
    }
    std::cout << std::left << std::setw(10) << m.method << std::setw(22) << m.variant
              << std::setw(5) << m.dim << std::setw(14) << std::setprecision(4) << m.log10_mse
              << m.failed << "\n";
  }
}

int run_one(const Flags& flags) {
  if (flags.config.empty()) {
    throw CLI::RequiredError("--config");
  }
  auto cfg = ais::load_config(flags.config);
  apply_overrides(cfg, flags);
  const auto start = std::chrono::steady_clock::now();
  const auto rows = ais::run_experiment(cfg);
  const auto mse = ais::compute_mse(rows);
  ais::emit_outputs(rows, mse, cfg.output_dir);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  print_final_mse(mse, cfg.total_budget());
  std::cout << rows.size() << " rows written to " << cfg.output_dir << " in " << std::fixed
            << std::setprecision(1) << elapsed.count() << " s\n";
  return any_run_error(rows) ? 2 : 0;
}

int run_grid(const Flags& flags) {
  const auto dims = ais::preset_dims(flags.preset);
  std::optional<ais::ExperimentConfig> base;
  if (!flags.config.empty()) {
    base = ais::load_config(flags.config);
  }
  std::vector<ais::ResultRow> all_rows;
  std::size_t final_budget = 0;
  std::string out_dir = flags.out.empty() ? "out/" + flags.preset : flags.out;
  for (auto d : dims) {
    auto cfg = base ? at_dimension(*base, d) : ais::preset_config(flags.preset, d);
    apply_overrides(cfg, flags);
    std::cout << "d = " << d << ": " << cfg.replicates << " replicates, budget "
              << cfg.total_budget() << std::endl;
    auto rows = ais::run_experiment(cfg);
    final_budget = cfg.total_budget();
    std::move(rows.begin(), rows.end(), std::back_inserter(all_rows));
  }
  const auto mse = ais::compute_mse(all_rows);
  ais::emit_outputs(all_rows, mse, out_dir);
  print_final_mse(mse, final_budget);
  std::cout << all_rows.size() << " rows written to " << out_dir << "\n";
  return any_run_error(all_rows) ? 2 : 0;
}

int run_checks(const Flags& flags) {
  const auto results = ais::run_invariant_checks(flags.seed.value_or(1));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive importance sampling experiments"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--seed", flags.seed, "Base seed");
    sub->add_option("--replicates", flags.replicates, "Replicates per cell")
        ->check(CLI::PositiveNumber);
    sub->add_option("--preset", flags.preset, "Grid preset")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--threads", flags.threads, "OpenMP threads (0 keeps the default)")
        ->check(CLI::NonNegativeNumber);
  };
  auto* run = app.add_subcommand("run", "Run one experiment config");
  auto* bench = app.add_subcommand("bench", "Run the preset grid over its dimensions");
  auto* check = app.add_subcommand("check", "Run the invariant suite");
  add_common(run);
  add_common(bench);
  add_common(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; any other usage error is a plain failure.
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (flags.threads > 0) {
    omp_set_num_threads(flags.threads);
  }
  try {
    if (run->parsed()) {
      return run_one(flags);
    }
    if (bench->parsed()) {
      return run_grid(flags);
    }
    return run_checks(flags);
  } catch (const CLI::Error& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "aisbench: " << e.what() << "\n";
    return 1;
  }
}
