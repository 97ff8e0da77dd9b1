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

#ifndef AIS_HARNESS_HPP
#define AIS_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ais/densities.hpp"
#include "ais/policy_update.hpp"

/**
 * \file
 * \brief Replicate sweeps on the Gaussian toy problem: estimate mu* = E[X] for
 * X ~ N(mu*, sigma*^2 I) with AIS, wAIS, adaptive Metropolis and fixed-policy IS.
 */

namespace ais {

/// Constant allocation policy: `stages` stages of `per_stage` points.
struct Schedule {
  std::size_t stages = 50;
  std::size_t per_stage = 400;

  [[nodiscard]] std::size_t total() const { return stages * per_stage; }
  /// "T50_n400"
  [[nodiscard]] std::string label() const;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct ExperimentConfig {
  Eigen::Index dim = 2;
  Vector mu_star;  ///< defaults to (5, ..., 5)
  double sigma_star = 1.0;
  Family family = Family::StudentT;
  double nu = 3.0;
  double sigma0 = 5.0;
  Vector q0_location;  ///< defaults to the origin
  UpdaterKind updater = UpdaterKind::Moments;
  std::vector<RegularizationKind> regularizations{RegularizationKind::SigFixed};
  std::vector<Schedule> alloc{Schedule{}};
  std::vector<std::string> methods{"ais", "wais", "amh", "oracle"};
  std::size_t replicates = 50;
  std::uint64_t base_seed = 1;
  /// Budgets at which every method is recorded; empty means the stage boundaries of the
  /// schedule with the most stages.
  std::vector<std::size_t> record_budgets;
  std::string output_dir = "out";
  bool report_unnormalized = false;
  std::size_t amh_i0 = 1000;
  double amh_epsilon = 0.05;

  /// Fills defaulted vectors and checks invariants; throws std::invalid_argument.
  void validate();
  [[nodiscard]] std::size_t total_budget() const { return alloc.front().total(); }
  [[nodiscard]] std::vector<std::size_t> budgets() const;
  /// Initial policy: location q0_location, scale sigma0 I (nu - 2) / nu.
  [[nodiscard]] PolicyParams initial_policy() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

/// "desk" (d in {1, 2, 4}, budget 2e4, 50 replicates) or "paper" (d in {2, 4, 8, 16},
/// budget 1e5, 100 replicates).
ExperimentConfig preset_config(std::string_view preset, Eigen::Index dim);
std::vector<Eigen::Index> preset_dims(std::string_view preset);

/// Stable per-run seed: FNV-1a over (base_seed, method, schedule, replicate), then a
/// splitmix64 finalizer.
std::uint64_t run_seed(std::uint64_t base_seed, std::string_view method, const Schedule& schedule,
                       std::size_t replicate);

enum WarningFlag : unsigned {
  kNoWarning = 0,
  kUpdateFallback = 1U << 0,
  kUndefinedEstimate = 1U << 1,
  kRunError = 1U << 2,
};

std::string warnings_to_string(unsigned flags);
unsigned warnings_from_string(std::string_view text);

struct ResultRow {
  std::string method;
  std::string variant;
  Eigen::Index dim = 0;
  std::size_t replicate = 0;
  std::size_t budget = 0;
  Vector estimate;
  double squared_error = 0.0;
  unsigned warnings = kNoWarning;
};

/// Every (method, variant, replicate, budget) cell, replicates run on an OpenMP pool.
/**
 * AIS and wAIS rows of one replicate come from the same run. Rows are returned in a fixed
 * order independent of the thread count.
 */
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

/// Serial reference for run_experiment; returns identical rows.
std::vector<ResultRow> run_experiment_serial(const ExperimentConfig& cfg);

struct MseRow {
  std::string method;
  std::string variant;
  Eigen::Index dim = 0;
  std::size_t budget = 0;
  double mse = 0.0;
  double log10_mse = 0.0;
  std::size_t replicates = 0;  ///< rows with a finite squared error
  std::size_t failed = 0;
};

/// Mean squared error per (method, variant, dim, budget), sorted by that key.
std::vector<MseRow> compute_mse(const std::vector<ResultRow>& rows);

/// MSE of one group. Throws std::invalid_argument when no finite row matches.
double mse_of(const std::vector<ResultRow>& rows, std::string_view method,
              std::string_view variant, std::size_t budget);

/// results.csv, mse_curves.csv and one mse_d<d>.svg per dimension present.
void emit_outputs(const std::vector<ResultRow>& rows, const std::vector<MseRow>& aggregates,
                  const std::filesystem::path& output_dir);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant suite behind `aisbench check`.
std::vector<CheckResult> run_invariant_checks(std::uint64_t seed);

}  // namespace ais

#endif  // AIS_HARNESS_HPP
