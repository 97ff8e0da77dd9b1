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

#include "ais/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "ais/ais_core.hpp"
#include "ais/baselines.hpp"
#include "report.hpp"

namespace ais {

namespace {

using nlohmann::json;
using detail::format_double;
using detail::parse_double;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string> kKnownMethods{"ais", "wais", "amh", "oracle"};

Vector vector_field(const json& node, const char* name) {
  if (node.is_number()) {
    return Vector::Constant(1, node.get<double>());
  }
  if (!node.is_array()) {
    throw std::invalid_argument(std::string(name) + " must be a number or an array of numbers");
  }
  Vector v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t k = 0; k < node.size(); ++k) {
    v[static_cast<Eigen::Index>(k)] = node[k].get<double>();
  }
  return v;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    out.push_back(v[k]);
  }
  return out;
}

// A one-element vector stands for the constant vector of length dim.
Vector broadcast(const Vector& v, Eigen::Index dim, double fallback, const char* name) {
  if (v.size() == 0) {
    return Vector::Constant(dim, fallback);
  }
  if (v.size() == 1 && dim > 1) {
    return Vector::Constant(dim, v[0]);
  }
  if (v.size() != dim) {
    throw std::invalid_argument(std::string(name) + " has length " + std::to_string(v.size()) +
                                ", expected " + std::to_string(dim));
  }
  return v;
}

void reject_unknown_keys(const json& node, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : node.items()) {
    if (allowed.count(key) == 0) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < size; ++k) {
    h ^= bytes[k];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Little-endian byte order regardless of host.
std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t value) {
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) {
    bytes[k] = static_cast<unsigned char>(value >> (8 * k));
  }
  return fnv1a(h, bytes, 8);
}

double squared_error(const Vector& estimate, const Vector& truth) {
  if (!estimate.allFinite()) {
    return kNaN;
  }
  return (estimate - truth).squaredNorm();
}

enum class CellKind { Ais, Amh, Oracle };

struct Cell {
  CellKind kind;
  std::size_t schedule = 0;
  std::size_t regularization = 0;
  std::size_t replicate = 0;
};

bool wants(const ExperimentConfig& cfg, const std::string& method) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  if (wants(cfg, "ais") || wants(cfg, "wais")) {
    for (std::size_t s = 0; s < cfg.alloc.size(); ++s) {
      for (std::size_t g = 0; g < cfg.regularizations.size(); ++g) {
        for (std::size_t r = 0; r < cfg.replicates; ++r) {
          cells.push_back({CellKind::Ais, s, g, r});
        }
      }
    }
  }
  if (wants(cfg, "amh")) {
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      cells.push_back({CellKind::Amh, 0, 0, r});
    }
  }
  if (wants(cfg, "oracle")) {
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      cells.push_back({CellKind::Oracle, 0, 0, r});
    }
  }
  return cells;
}

ResultRow make_row(const ExperimentConfig& cfg, std::string method, std::string variant,
                   std::size_t replicate, std::size_t budget, Vector estimate, unsigned warnings) {
  ResultRow row;
  row.method = std::move(method);
  row.variant = std::move(variant);
  row.dim = cfg.dim;
  row.replicate = replicate;
  row.budget = budget;
  row.squared_error = squared_error(estimate, cfg.mu_star);
  if (std::isnan(row.squared_error)) {
    warnings |= kUndefinedEstimate;
  }
  row.estimate = std::move(estimate);
  row.warnings = warnings;
  return row;
}

Integrand identity_integrand() {
  return [](const Vector& x) { return x; };
}

std::vector<ResultRow> run_ais_cell(const ExperimentConfig& cfg, const Cell& cell,
                                    const std::vector<std::size_t>& budgets) {
  const Schedule& schedule = cfg.alloc[cell.schedule];
  const RegularizationMode reg{cfg.regularizations[cell.regularization], cfg.sigma0};
  const std::string variant = schedule.label() + "/" + to_string(reg.mode);
  const bool want_ais = wants(cfg, "ais");
  const bool want_wais = wants(cfg, "wais");

  std::vector<ResultRow> rows;
  auto emit_failure = [&] {
    rows.clear();
    const Vector nan = Vector::Constant(cfg.dim, kNaN);
    for (std::size_t b : budgets) {
      if (want_ais) {
        rows.push_back(make_row(cfg, "ais", variant, cell.replicate, b, nan, kRunError));
      }
      if (want_wais) {
        rows.push_back(make_row(cfg, "wais", variant, cell.replicate, b, nan, kRunError));
      }
      if (cfg.report_unnormalized) {
        rows.push_back(
            make_row(cfg, "ais_unnormalized", variant, cell.replicate, b, nan, kRunError));
      }
    }
  };

  try {
    std::size_t every = schedule.per_stage;
    for (std::size_t b : budgets) {
      every = std::gcd(every, b);
    }
    AisRunOptions options;
    options.record_every = every;
    // Replicates already fill the pool.
    options.parallel_evaluation = false;

    Rng rng(run_seed(cfg.base_seed, "ais", schedule, cell.replicate));
    auto updater = make_updater(cfg.updater, cfg.dim, reg);
    const TargetSpec target = TargetSpec::gaussian(cfg.mu_star, cfg.sigma_star);
    const AisTrace trace =
        run_ais(identity_integrand(), target, cfg.initial_policy(),
                AllocationPolicy::constant(schedule.stages, schedule.per_stage), *updater, rng,
                options);

    std::map<std::size_t, const TraceEntry*> by_budget;
    for (const auto& e : trace.entries) {
      by_budget[e.budget] = &e;
    }
    bool fallback_so_far = false;
    std::size_t scanned = 0;
    for (std::size_t b : budgets) {
      const auto it = by_budget.find(b);
      if (it == by_budget.end()) {
        throw std::logic_error("no trace entry at budget " + std::to_string(b));
      }
      for (const auto& e : trace.entries) {
        if (e.budget > scanned && e.budget <= b) {
          fallback_so_far = fallback_so_far || e.warning;
        }
      }
      scanned = b;
      const unsigned flags = fallback_so_far ? kUpdateFallback : kNoWarning;
      const TraceEntry& e = *it->second;
      if (want_ais) {
        rows.push_back(make_row(cfg, "ais", variant, cell.replicate, b, e.normalized, flags));
      }
      if (want_wais) {
        rows.push_back(make_row(cfg, "wais", variant, cell.replicate, b, e.weighted, flags));
      }
      if (cfg.report_unnormalized) {
        rows.push_back(make_row(cfg, "ais_unnormalized", variant, cell.replicate, b,
                                e.target_unnormalized, flags));
      }
    }
  } catch (const std::exception&) {
    emit_failure();
  }
  return rows;
}

std::vector<ResultRow> run_amh_cell(const ExperimentConfig& cfg, const Cell& cell,
                                    const std::vector<std::size_t>& budgets) {
  std::vector<ResultRow> rows;
  try {
    AmhConfig amh;
    amh.i0 = cfg.amh_i0;
    amh.epsilon = cfg.amh_epsilon;
    amh.chain_length = cfg.total_budget();
    amh.seed = run_seed(cfg.base_seed, "amh", Schedule{1, cfg.total_budget()}, cell.replicate);
    amh.start = Vector::Zero(cfg.dim);
    const AmhResult result =
        adaptive_mh_run(TargetSpec::gaussian(cfg.mu_star, cfg.sigma_star), amh);
    for (std::size_t b : budgets) {
      rows.push_back(
          make_row(cfg, "amh", "-", cell.replicate, b, result.running_mean.at(b - 1), kNoWarning));
    }
  } catch (const std::exception&) {
    rows.clear();
    for (std::size_t b : budgets) {
      rows.push_back(make_row(cfg, "amh", "-", cell.replicate, b,
                              Vector::Constant(cfg.dim, kNaN), kRunError));
    }
  }
  return rows;
}

std::vector<ResultRow> run_oracle_cell(const ExperimentConfig& cfg, const Cell& cell,
                                       const std::vector<std::size_t>& budgets) {
  std::vector<ResultRow> rows;
  try {
    const PolicyParams oracle = PolicyParams::gaussian(
        cfg.mu_star,
        Matrix::Identity(cfg.dim, cfg.dim) * (cfg.sigma_star * cfg.sigma_star));
    const auto trace = oracle_is_run(
        oracle, identity_integrand(), TargetSpec::gaussian(cfg.mu_star, cfg.sigma_star),
        cfg.total_budget(),
        run_seed(cfg.base_seed, "oracle", Schedule{1, cfg.total_budget()}, cell.replicate),
        budgets);
    for (std::size_t b : budgets) {
      const auto it = std::find_if(trace.begin(), trace.end(),
                                   [b](const OracleTracePoint& p) { return p.budget == b; });
      if (it == trace.end()) {
        throw std::logic_error("oracle trace missing budget " + std::to_string(b));
      }
      rows.push_back(make_row(cfg, "oracle", "-", cell.replicate, b, it->estimate, kNoWarning));
    }
  } catch (const std::exception&) {
    rows.clear();
    for (std::size_t b : budgets) {
      rows.push_back(make_row(cfg, "oracle", "-", cell.replicate, b,
                              Vector::Constant(cfg.dim, kNaN), kRunError));
    }
  }
  return rows;
}

std::vector<ResultRow> run_cell(const ExperimentConfig& cfg, const Cell& cell,
                                const std::vector<std::size_t>& budgets) {
  switch (cell.kind) {
    case CellKind::Ais:
      return run_ais_cell(cfg, cell, budgets);
    case CellKind::Amh:
      return run_amh_cell(cfg, cell, budgets);
    case CellKind::Oracle:
      return run_oracle_cell(cfg, cell, budgets);
  }
  return {};
}

std::vector<ResultRow> flatten(std::vector<std::vector<ResultRow>>& slots) {
  std::vector<ResultRow> rows;
  for (auto& slot : slots) {
    std::move(slot.begin(), slot.end(), std::back_inserter(rows));
  }
  return rows;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, sep)) {
    parts.push_back(item);
  }
  if (!line.empty() && line.back() == sep) {
    parts.emplace_back();
  }
  return parts;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  return out;
}

}  // namespace

std::string Schedule::label() const {
  return "T" + std::to_string(stages) + "_n" + std::to_string(per_stage);
}

void ExperimentConfig::validate() {
  if (dim < 1) {
    throw std::invalid_argument("dim must be at least 1");
  }
  mu_star = broadcast(mu_star, dim, 5.0, "mu_star");
  q0_location = broadcast(q0_location, dim, 0.0, "q0_location");
  if (!(sigma_star > 0.0) || !std::isfinite(sigma_star)) {
    throw std::invalid_argument("sigma_star must be positive");
  }
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) {
    throw std::invalid_argument("sigma0 must be positive");
  }
  if (family == Family::StudentT && !(nu > 2.0)) {
    throw std::invalid_argument("nu must exceed 2 for a Student-t policy");
  }
  if (replicates < 1) {
    throw std::invalid_argument("replicates must be at least 1");
  }
  if (regularizations.empty()) {
    throw std::invalid_argument("at least one regularization mode is required");
  }
  if (alloc.empty()) {
    throw std::invalid_argument("alloc needs at least one (T, n_t) schedule");
  }
  for (const auto& s : alloc) {
    if (s.stages == 0 || s.per_stage == 0) {
      throw std::invalid_argument("schedule " + s.label() + " is empty");
    }
    if (s.total() != alloc.front().total()) {
      throw std::invalid_argument("schedules must share the total budget: " + s.label() +
                                  " has " + std::to_string(s.total()) + ", " +
                                  alloc.front().label() + " has " +
                                  std::to_string(alloc.front().total()));
    }
  }
  if (methods.empty()) {
    throw std::invalid_argument("at least one method is required");
  }
  for (const auto& m : methods) {
    if (kKnownMethods.count(m) == 0) {
      throw std::invalid_argument("unknown method '" + m + "'");
    }
  }
  std::sort(record_budgets.begin(), record_budgets.end());
  record_budgets.erase(std::unique(record_budgets.begin(), record_budgets.end()),
                       record_budgets.end());
  for (auto b : record_budgets) {
    if (b == 0 || b > total_budget()) {
      throw std::invalid_argument("record budget " + std::to_string(b) + " outside [1, " +
                                  std::to_string(total_budget()) + "]");
    }
  }
  if (amh_i0 == 0 || !(amh_epsilon > 0.0)) {
    throw std::invalid_argument("amh needs i0 >= 1 and epsilon > 0");
  }
}

std::vector<std::size_t> ExperimentConfig::budgets() const {
  if (!record_budgets.empty()) {
    return record_budgets;
  }
  const auto finest = std::max_element(
      alloc.begin(), alloc.end(),
      [](const Schedule& a, const Schedule& b) { return a.stages < b.stages; });
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t <= finest->stages; ++t) {
    out.push_back(t * finest->per_stage);
  }
  return out;
}

PolicyParams ExperimentConfig::initial_policy() const {
  const Matrix identity = Matrix::Identity(dim, dim);
  if (family == Family::Gaussian) {
    return PolicyParams::gaussian(q0_location, sigma0 * identity);
  }
  return PolicyParams::student(q0_location, sigma0 * (nu - 2.0) / nu * identity, nu);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw std::invalid_argument("config must be a JSON object");
  }
  reject_unknown_keys(doc,
                      {"dim", "target", "family", "nu", "sigma0", "q0_location", "updater",
                       "alloc", "methods", "replicates", "base_seed", "record_budgets",
                       "output_dir", "report_unnormalized", "amh"},
                      "config");

  ExperimentConfig cfg;
  try {
    cfg.dim = doc.value("dim", cfg.dim);
    if (doc.contains("target")) {
      const json& target = doc["target"];
      reject_unknown_keys(target, {"mu_star", "sigma_star"}, "target");
      if (target.contains("mu_star")) {
        cfg.mu_star = vector_field(target["mu_star"], "mu_star");
      }
      cfg.sigma_star = target.value("sigma_star", cfg.sigma_star);
    }
    if (doc.contains("family")) {
      cfg.family = family_from_string(doc["family"].get<std::string>());
    }
    cfg.nu = doc.value("nu", cfg.nu);
    cfg.sigma0 = doc.value("sigma0", cfg.sigma0);
    if (doc.contains("q0_location")) {
      cfg.q0_location = vector_field(doc["q0_location"], "q0_location");
    }
    if (doc.contains("updater")) {
      const json& updater = doc["updater"];
      if (updater.is_string()) {
        cfg.updater = updater_from_string(updater.get<std::string>());
      } else {
        reject_unknown_keys(updater, {"kind", "regularization"}, "updater");
        if (updater.contains("kind")) {
          cfg.updater = updater_from_string(updater["kind"].get<std::string>());
        }
        if (updater.contains("regularization")) {
          const json& reg = updater["regularization"];
          cfg.regularizations.clear();
          if (reg.is_string()) {
            cfg.regularizations.push_back(regularization_from_string(reg.get<std::string>()));
          } else {
            for (const auto& r : reg) {
              cfg.regularizations.push_back(regularization_from_string(r.get<std::string>()));
            }
          }
        }
      }
    }
    if (doc.contains("alloc")) {
      cfg.alloc.clear();
      for (const auto& s : doc["alloc"]) {
        reject_unknown_keys(s, {"T", "n_t"}, "alloc entry");
        cfg.alloc.push_back(Schedule{s.at("T").get<std::size_t>(), s.at("n_t").get<std::size_t>()});
      }
    }
    if (doc.contains("methods")) {
      cfg.methods = doc["methods"].get<std::vector<std::string>>();
    }
    cfg.replicates = doc.value("replicates", cfg.replicates);
    cfg.base_seed = doc.value("base_seed", cfg.base_seed);
    if (doc.contains("record_budgets")) {
      cfg.record_budgets = doc["record_budgets"].get<std::vector<std::size_t>>();
    }
    cfg.output_dir = doc.value("output_dir", cfg.output_dir);
    cfg.report_unnormalized = doc.value("report_unnormalized", cfg.report_unnormalized);
    if (doc.contains("amh")) {
      const json& amh = doc["amh"];
      reject_unknown_keys(amh, {"i0", "epsilon"}, "amh");
      cfg.amh_i0 = amh.value("i0", cfg.amh_i0);
      cfg.amh_epsilon = amh.value("epsilon", cfg.amh_epsilon);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read config " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["dim"] = cfg.dim;
  doc["target"] = {{"mu_star", vector_to_json(cfg.mu_star)}, {"sigma_star", cfg.sigma_star}};
  doc["family"] = to_string(cfg.family);
  doc["nu"] = cfg.nu;
  doc["sigma0"] = cfg.sigma0;
  doc["q0_location"] = vector_to_json(cfg.q0_location);
  json regs = json::array();
  for (auto r : cfg.regularizations) {
    regs.push_back(to_string(r));
  }
  doc["updater"] = {{"kind", to_string(cfg.updater)}, {"regularization", regs}};
  json alloc = json::array();
  for (const auto& s : cfg.alloc) {
    alloc.push_back({{"T", s.stages}, {"n_t", s.per_stage}});
  }
  doc["alloc"] = alloc;
  doc["methods"] = cfg.methods;
  doc["replicates"] = cfg.replicates;
  doc["base_seed"] = cfg.base_seed;
  doc["record_budgets"] = cfg.record_budgets;
  doc["output_dir"] = cfg.output_dir;
  doc["report_unnormalized"] = cfg.report_unnormalized;
  doc["amh"] = {{"i0", cfg.amh_i0}, {"epsilon", cfg.amh_epsilon}};
  return doc.dump(2);
}

ExperimentConfig preset_config(std::string_view preset, Eigen::Index dim) {
  ExperimentConfig cfg;
  cfg.dim = dim;
  cfg.regularizations = {RegularizationKind::SigFixed, RegularizationKind::SigDiag,
                         RegularizationKind::SigFull};
  if (preset == "desk") {
    cfg.alloc = {{50, 400}, {20, 1000}, {5, 4000}};
    cfg.replicates = 50;
  } else if (preset == "paper") {
    cfg.alloc = {{50, 2000}, {20, 5000}, {5, 20000}};
    cfg.replicates = 100;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(preset) +
                                "' (expected desk or paper)");
  }
  cfg.output_dir = "out/" + std::string(preset) + "_d" + std::to_string(dim);
  cfg.validate();
  return cfg;
}

std::vector<Eigen::Index> preset_dims(std::string_view preset) {
  if (preset == "desk") {
    return {1, 2, 4};
  }
  if (preset == "paper") {
    return {2, 4, 8, 16};
  }
  throw std::invalid_argument("unknown preset '" + std::string(preset) + "'");
}

std::uint64_t run_seed(std::uint64_t base_seed, std::string_view method, const Schedule& schedule,
                       std::size_t replicate) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a_u64(h, base_seed);
  h = fnv1a(h, method.data(), method.size());
  h = fnv1a_u64(h, schedule.stages);
  h = fnv1a_u64(h, schedule.per_stage);
  h = fnv1a_u64(h, replicate);
  return splitmix64(h);
}

std::string warnings_to_string(unsigned flags) {
  std::string out;
  auto add = [&](unsigned bit, const char* name) {
    if ((flags & bit) != 0U) {
      out += out.empty() ? "" : "|";
      out += name;
    }
  };
  add(kUpdateFallback, "update_fallback");
  add(kUndefinedEstimate, "undefined_estimate");
  add(kRunError, "run_error");
  return out;
}

unsigned warnings_from_string(std::string_view text) {
  unsigned flags = kNoWarning;
  for (const auto& part : split(std::string(text), '|')) {
    if (part == "update_fallback") {
      flags |= kUpdateFallback;
    } else if (part == "undefined_estimate") {
      flags |= kUndefinedEstimate;
    } else if (part == "run_error") {
      flags |= kRunError;
    } else if (!part.empty()) {
      throw std::invalid_argument("unknown warning flag '" + part + "'");
    }
  }
  return flags;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  const auto cells = enumerate_cells(cfg);
  const auto budgets = cfg.budgets();
  std::vector<std::vector<ResultRow>> slots(cells.size());
  const auto count = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < count; ++c) {
    slots[c] = run_cell(cfg, cells[c], budgets);
  }
  return flatten(slots);
}

std::vector<ResultRow> run_experiment_serial(const ExperimentConfig& cfg) {
  const auto cells = enumerate_cells(cfg);
  const auto budgets = cfg.budgets();
  std::vector<std::vector<ResultRow>> slots(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    slots[c] = run_cell(cfg, cells[c], budgets);
  }
  return flatten(slots);
}

std::vector<MseRow> compute_mse(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, Eigen::Index, std::size_t>;
  struct Sum {
    double total = 0.0;
    std::size_t finite = 0;
    std::size_t failed = 0;
  };
  std::map<Key, Sum> groups;
  for (const auto& row : rows) {
    auto& g = groups[{row.method, row.variant, row.dim, row.budget}];
    if (std::isfinite(row.squared_error)) {
      g.total += row.squared_error;
      ++g.finite;
    } else {
      ++g.failed;
    }
  }
  std::vector<MseRow> out;
  out.reserve(groups.size());
  for (const auto& [key, g] : groups) {
    MseRow m;
    std::tie(m.method, m.variant, m.dim, m.budget) = key;
    m.replicates = g.finite;
    m.failed = g.failed;
    m.mse = g.finite > 0 ? g.total / static_cast<double>(g.finite) : kNaN;
    m.log10_mse = std::log10(m.mse);
    out.push_back(std::move(m));
  }
  return out;
}

double mse_of(const std::vector<ResultRow>& rows, std::string_view method,
              std::string_view variant, std::size_t budget) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (row.method == method && row.variant == variant && row.budget == budget &&
        std::isfinite(row.squared_error)) {
      total += row.squared_error;
      ++n;
    }
  }
  if (n == 0) {
    throw std::invalid_argument("no finite rows for " + std::string(method) + " " +
                                std::string(variant) + " at budget " + std::to_string(budget));
  }
  return total / static_cast<double>(n);
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  Eigen::Index width = 0;
  for (const auto& row : rows) {
    width = std::max(width, row.estimate.size());
  }
  auto out = open_for_write(path);
  out << "method,variant,dim,replicate,budget";
  for (Eigen::Index k = 0; k < width; ++k) {
    out << ",estimate_" << k;
  }
  out << ",squared_error,warnings\n";
  for (const auto& row : rows) {
    out << row.method << ',' << row.variant << ',' << row.dim << ',' << row.replicate << ','
        << row.budget;
    for (Eigen::Index k = 0; k < width; ++k) {
      out << ',';
      if (k < row.estimate.size()) {
        out << format_double(row.estimate[k]);
      }
    }
    out << ',' << format_double(row.squared_error) << ',' << warnings_to_string(row.warnings)
        << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path.string() + " is empty");
  }
  const auto header = split(line, ',');
  if (header.size() < 7 || header[0] != "method" || header[header.size() - 1] != "warnings") {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  const std::size_t width = header.size() - 7;
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cols = split(line, ',');
    if (cols.size() != header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " columns, got " +
                               std::to_string(cols.size()));
    }
    ResultRow row;
    row.method = cols[0];
    row.variant = cols[1];
    row.dim = std::stol(cols[2]);
    row.replicate = std::stoul(cols[3]);
    row.budget = std::stoul(cols[4]);
    row.estimate.resize(row.dim);
    for (Eigen::Index k = 0; k < row.dim; ++k) {
      if (static_cast<std::size_t>(k) >= width) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": dim exceeds estimate columns");
      }
      row.estimate[k] = parse_double(cols[5 + k]);
    }
    row.squared_error = parse_double(cols[5 + width]);
    row.warnings = warnings_from_string(cols[6 + width]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit_outputs(const std::vector<ResultRow>& rows, const std::vector<MseRow>& aggregates,
                  const std::filesystem::path& output_dir) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create " + output_dir.string() + ": " + ec.message());
  }
  write_results_csv(rows, output_dir / "results.csv");

  {
    auto out = open_for_write(output_dir / "mse_curves.csv");
    out << "method,variant,dim,budget,mse,log10_mse,replicates,failed\n";
    for (const auto& m : aggregates) {
      out << m.method << ',' << m.variant << ',' << m.dim << ',' << m.budget << ','
          << format_double(m.mse) << ',' << format_double(m.log10_mse) << ',' << m.replicates
          << ',' << m.failed << '\n';
    }
  }

  std::map<Eigen::Index, std::map<std::string, detail::ChartSeries>> charts;
  for (const auto& m : aggregates) {
    const std::string name = m.variant == "-" ? m.method : m.method + " " + m.variant;
    auto& series = charts[m.dim][name];
    series.name = name;
    series.points.emplace_back(static_cast<double>(m.budget), m.log10_mse);
  }
  for (auto& [dim, by_name] : charts) {
    std::vector<detail::ChartSeries> series;
    for (auto& [_, s] : by_name) {
      std::sort(s.points.begin(), s.points.end());
      series.push_back(std::move(s));
    }
    detail::write_svg_chart(output_dir / ("mse_d" + std::to_string(dim) + ".svg"),
                            "log10 MSE, d = " + std::to_string(dim), series);
  }
}

std::vector<CheckResult> run_invariant_checks(std::uint64_t seed) {
  std::vector<CheckResult> results;
  auto check = [&](const std::string& name, auto&& body) {
    CheckResult r{name, false, ""};
    try {
      r.detail = body();
      r.passed = r.detail.rfind("FAIL", 0) != 0;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  };
  Rng rng(seed);

  check("stage_weight_budget_constraint", [&] {
    std::uniform_int_distribution<std::size_t> stages_dist(1, 60);
    std::uniform_int_distribution<std::size_t> size_dist(1, 5000);
    std::uniform_real_distribution<double> log_s(-8.0, 8.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<StageRecord> stages(stages_dist(rng));
      double total = 0.0;
      for (auto& s : stages) {
        s.size = size_dist(rng);
        s.weight_var_stat = std::pow(10.0, log_s(rng));
        total += static_cast<double>(s.size);
      }
      const auto w = compute_stage_weights(stages);
      double sum = 0.0;
      for (std::size_t t = 0; t < stages.size(); ++t) {
        sum += static_cast<double>(stages[t].size) * w.alphas[t];
      }
      worst = std::max(worst, std::abs(sum - total) / total);
    }
    return std::string(worst <= 1e-10 ? "" : "FAIL ") + "max relative error " +
           format_double(worst);
  });

  check("stage_vs_sample_scale", [&] {
    const TargetSpec target = TargetSpec::gaussian(Vector::Constant(2, 1.0), 1.0);
    const PolicyParams q0 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2), 3.0);
    for (const auto& sizes : {std::vector<std::size_t>{2, 3}, std::vector<std::size_t>(5, 1)}) {
      for (std::uint64_t s = 0; s < 5; ++s) {
        const RegularizationMode reg{RegularizationKind::SigFixed, 5.0};
        auto u1 = make_updater(UpdaterKind::Moments, 2, reg);
        auto u2 = make_updater(UpdaterKind::Moments, 2, reg);
        Rng r1(seed + s);
        Rng r2(seed + s);
        const auto a = run_ais(identity_integrand(), target, q0, AllocationPolicy(sizes), *u1, r1);
        const auto b = run_ais_sample_scale(identity_integrand(), target, q0,
                                            AllocationPolicy(sizes), *u2, r2);
        if (a.entries.size() != b.entries.size()) {
          return std::string("FAIL trace lengths differ");
        }
        for (std::size_t k = 0; k < a.entries.size(); ++k) {
          if (a.entries[k].sum_S != b.entries[k].sum_S) {
            return "FAIL S differs at budget " + std::to_string(a.entries[k].budget);
          }
        }
      }
    }
    return std::string("bit-identical S");
  });

  check("normalized_scale_invariance", [&] {
    const Vector mu = Vector::Constant(1, 0.5);
    const TargetSpec base = TargetSpec::gaussian(mu, 1.0);
    const TargetSpec scaled = TargetSpec::custom(
        1, [base](const Vector& x) { return base.log_density(x) + std::log(1e6); });
    const PolicyParams q = PolicyParams::student(Vector::Zero(1), Matrix::Identity(1, 1), 3.0);
    IdentityUpdater u1;
    IdentityUpdater u2;
    Rng r1(seed);
    Rng r2(seed);
    const auto alloc = AllocationPolicy::constant(4, 250);
    const auto a = run_ais(identity_integrand(), base, q, alloc, u1, r1);
    const auto b = run_ais(identity_integrand(), scaled, q, alloc, u2, r2);
    const double diff = std::abs(estimate_normalized(a.final_state)[0] -
                                 estimate_normalized(b.final_state)[0]);
    return std::string(diff <= 1e-12 ? "" : "FAIL ") + "difference " + format_double(diff);
  });

  check("oracle_matches_identity_run", [&] {
    const Vector mu = Vector::Constant(2, 5.0);
    const TargetSpec target = TargetSpec::gaussian(mu, 1.0);
    const PolicyParams q = PolicyParams::gaussian(mu, Matrix::Identity(2, 2));
    const auto oracle = oracle_is_run(q, identity_integrand(), target, 1000, seed);
    IdentityUpdater u;
    Rng r(seed);
    const auto trace =
        run_ais(identity_integrand(), target, q, AllocationPolicy::constant(1, 1000), u, r);
    const bool same = oracle.back().estimate == estimate_normalized(trace.final_state);
    return std::string(same ? "" : "FAIL ") + "final estimates " +
           (same ? "identical" : "differ");
  });

  check("experiment_determinism", [&] {
    ExperimentConfig cfg;
    cfg.dim = 2;
    cfg.alloc = {{5, 40}, {2, 100}};
    cfg.replicates = 3;
    cfg.base_seed = seed;
    cfg.amh_i0 = 50;
    cfg.validate();
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    const auto c = run_experiment_serial(cfg);
    auto same = [](const std::vector<ResultRow>& x, const std::vector<ResultRow>& y) {
      if (x.size() != y.size()) {
        return false;
      }
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].method != y[k].method || x[k].variant != y[k].variant ||
            x[k].budget != y[k].budget || x[k].replicate != y[k].replicate ||
            !(x[k].estimate.array() == y[k].estimate.array()).all()) {
          return false;
        }
      }
      return true;
    };
    if (!same(a, b)) {
      return std::string("FAIL reruns differ");
    }
    if (!same(a, c)) {
      return std::string("FAIL parallel and serial runs differ");
    }
    return std::to_string(a.size()) + " rows identical across reruns and thread counts";
  });

  check("running_covariance_matches_batch", [&] {
    std::normal_distribution<double> normal;
    RunningCovariance online(3);
    std::vector<Vector> xs;
    for (int i = 0; i < 500; ++i) {
      Vector x(3);
      for (int k = 0; k < 3; ++k) {
        x[k] = normal(rng) * (k + 1) + 10.0;
      }
      online.push(x);
      xs.push_back(x);
    }
    Vector mean = Vector::Zero(3);
    for (const auto& x : xs) {
      mean += x;
    }
    mean /= static_cast<double>(xs.size());
    Matrix cov = Matrix::Zero(3, 3);
    for (const auto& x : xs) {
      cov += (x - mean) * (x - mean).transpose();
    }
    cov /= static_cast<double>(xs.size());
    const double err = (online.covariance() - cov).cwiseAbs().maxCoeff();
    return std::string(err <= 1e-9 ? "" : "FAIL ") + "max abs error " + format_double(err);
  });

  return results;
}

}  // namespace ais
