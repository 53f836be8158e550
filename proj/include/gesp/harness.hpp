#pragma once

// Budgeted experiment runner: CMA-ES over linear policies, each candidate
// evaluated under a stopping policy, until the step budget is spent.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gesp/core.hpp"
#include "gesp/criteria.hpp"
#include "gesp/envs.hpp"
#include "gesp/format.hpp"
#include "gesp/gesp.hpp"
#include "gesp/optimizer.hpp"
#include "gesp/stats.hpp"

namespace gesp {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ (b * 0xd1342543de82ef95ULL + 1)); }

struct StoppingSpec {
  StoppingPolicy::Kind kind = StoppingPolicy::Kind::Standard;
  double t_grace_fraction = 0.2;
  std::optional<ProblemSpecificCriterion> criterion;
  MonotoneTransform transform;

  StoppingPolicy build(std::size_t t_max) const {
    const auto grace = GraceConfig::from_fraction(t_grace_fraction, t_max);
    StoppingPolicy p = StoppingPolicy::standard();
    switch (kind) {
      case StoppingPolicy::Kind::Standard:
        break;
      case StoppingPolicy::Kind::Gesp:
        p = StoppingPolicy::gesp(grace);
        break;
      case StoppingPolicy::Kind::ProblemSpecific:
        if (!criterion) throw std::invalid_argument("problem-specific stopping needs a criterion");
        p = StoppingPolicy::problem_specific(*criterion);
        break;
      case StoppingPolicy::Kind::Composite:
        if (!criterion) throw std::invalid_argument("composite stopping needs a criterion");
        p = StoppingPolicy::composite(grace, *criterion);
        break;
    }
    p.transform = transform;
    return p;
  }
};

inline std::string stopping_name(StoppingPolicy::Kind k) {
  switch (k) {
    case StoppingPolicy::Kind::Standard: return "standard";
    case StoppingPolicy::Kind::Gesp: return "gesp";
    case StoppingPolicy::Kind::ProblemSpecific: return "problem";
    case StoppingPolicy::Kind::Composite: return "composite";
  }
  return "unknown";
}

// How episode reset seeds are drawn within a repetition.
enum class EnvSeeding {
  PerEvaluation,  // every evaluation starts from a fresh random state
  PerGeneration,  // candidates of one generation share a start state
  PerRepetition,  // one start state for the whole repetition
};

// Pendulum needs a nonlinear policy to swing up; everything else is linear.
inline std::size_t default_hidden_units(std::string_view env_id) { return env_id == "pendulum" ? 8 : 0; }

inline std::string seeding_name(EnvSeeding s) {
  switch (s) {
    case EnvSeeding::PerEvaluation: return "evaluation";
    case EnvSeeding::PerGeneration: return "generation";
    case EnvSeeding::PerRepetition: return "repetition";
  }
  return "unknown";
}

struct ExperimentConfig {
  std::string experiment_id;  // empty = env_id
  std::string env_id = "cartpole";
  StoppingSpec stopping;
  std::size_t budget = 200000;
  std::size_t repetitions = 30;
  std::uint64_t base_seed = 1;
  std::size_t sample_grid = 100;
  double initial_sigma = 0.5;
  EnvSeeding seeding = EnvSeeding::PerEvaluation;
  std::optional<std::size_t> hidden_units;  // unset = default_hidden_units(env_id)
  bool keep_records = false;

  std::string id() const { return experiment_id.empty() ? env_id : experiment_id; }
};

struct Checkpoint {
  std::size_t budget = 0;
  std::optional<double> best;  // nullopt until the first full evaluation
  std::size_t evaluations_started = 0;
  std::size_t evaluations_full = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct RunSummary {
  std::size_t evaluations_started = 0;  // evaluations that produced a record
  std::size_t evaluations_full = 0;
  std::size_t steps_consumed = 0;       // includes a discarded trailing evaluation
  std::optional<double> final_best;
  std::vector<Checkpoint> series;
  std::vector<EvaluationRecord> records;  // only with keep_records
};

// Evenly spaced budget checkpoints; the last one equals the budget.
inline std::vector<std::size_t> checkpoint_grid(std::size_t budget, std::size_t points) {
  if (points == 0) throw std::invalid_argument("sample grid must have at least one point");
  std::vector<std::size_t> grid(points);
  for (std::size_t k = 1; k <= points; ++k) {
    grid[k - 1] = static_cast<std::size_t>((static_cast<unsigned __int128>(budget) * k) / points);
  }
  return grid;
}

inline void validate(const ExperimentConfig& config, const Environment& env) {
  if (config.repetitions == 0) throw std::invalid_argument("repetitions must be >= 1");
  if (config.sample_grid == 0) throw std::invalid_argument("sample grid must be >= 1");
  if (config.budget < env.t_max()) {
    throw std::invalid_argument("budget (" + std::to_string(config.budget) + ") is below t_max (" +
                                std::to_string(env.t_max()) + ")");
  }
  const auto& s = config.stopping;
  if (!(s.t_grace_fraction >= 0.0 && s.t_grace_fraction <= 1.0)) {
    throw std::invalid_argument("t_grace fraction must lie in [0, 1]");
  }
  if (s.criterion) {
    if (const auto* hb = std::get_if<HealthyBounds>(&*s.criterion)) {
      if (hb->state_index >= env.observation_dim()) {
        throw std::invalid_argument("bounds criterion watches state " + std::to_string(hb->state_index) +
                                    " but " + env.id() + " observations have " +
                                    std::to_string(env.observation_dim()) + " entries");
      }
    }
  }
  (void)s.build(env.t_max());
}

namespace detail {

inline std::vector<Checkpoint> sample_series(const std::vector<EvaluationRecord>& records,
                                             const std::vector<std::size_t>& grid) {
  std::vector<Checkpoint> series;
  series.reserve(grid.size());
  std::size_t next = 0;
  Checkpoint state;
  for (std::size_t b : grid) {
    while (next < records.size() && records[next].budget_consumed_at_finish <= b) {
      const auto& r = records[next++];
      ++state.evaluations_started;
      if (r.fully_evaluated) {
        ++state.evaluations_full;
        if (!state.best || r.reported_objective > *state.best) state.best = r.reported_objective;
      }
    }
    state.budget = b;
    series.push_back(state);
  }
  return series;
}

}  // namespace detail

// One repetition against a caller-owned environment.
inline RunSummary run_single(const ExperimentConfig& config, std::size_t rep, Environment& env) {
  validate(config, env);
  const std::size_t t_max = env.t_max();
  const StoppingPolicy stopping = config.stopping.build(t_max);
  const std::uint64_t rep_seed = derive_seed(config.base_seed, rep);

  Policy policy(env, config.hidden_units.value_or(default_hidden_units(config.env_id)));
  CmaEs cma(std::vector<double>(policy.parameter_count(), 0.0),
            derive_seed(rep_seed, 0), CmaOptions{0, config.initial_sigma});
  BestReference ref(t_max);
  BudgetClock clock(config.budget);

  std::vector<EvaluationRecord> records;
  std::uint64_t eval_index = 0;
  std::uint64_t generation = 0;
  bool done = false;
  while (!done) {
    ++generation;
    const auto candidates = cma.ask();
    std::vector<double> fitness;
    fitness.reserve(candidates.size());
    for (const auto& cand : candidates) {
      if (clock.exhausted()) {
        done = true;
        break;
      }
      policy.set_params(cand);
      ++eval_index;
      const std::uint64_t env_seed =
          config.seeding == EnvSeeding::PerEvaluation   ? derive_seed(rep_seed, eval_index)
          : config.seeding == EnvSeeding::PerGeneration ? derive_seed(rep_seed ^ 0x5bd1e995ULL, generation)
                                                        : derive_seed(rep_seed ^ 0x5bd1e995ULL, 0);
      auto rec = evaluate_with_stopping(env, policy, cand, env_seed, ref, stopping, clock);
      if (!rec) {
        done = true;
        break;
      }
      maybe_update_best(*rec, ref);
      fitness.push_back(rec->reported_objective);
      records.push_back(std::move(*rec));
    }
    if (!done) cma.tell(candidates, fitness);
  }

  RunSummary out;
  out.steps_consumed = clock.consumed();
  out.series = detail::sample_series(records, checkpoint_grid(config.budget, config.sample_grid));
  for (const auto& r : records) {
    ++out.evaluations_started;
    if (r.fully_evaluated) ++out.evaluations_full;
  }
  if (!ref.empty()) out.final_best = ref.best_full_objective();
  for (std::size_t i = 1; i < out.series.size(); ++i) {
    const auto& a = out.series[i - 1].best;
    const auto& b = out.series[i].best;
    if (a && (!b || *b < *a)) throw std::logic_error("attainment series is not monotone");
  }
  if (config.keep_records) out.records = std::move(records);
  return out;
}

inline RunSummary run_single(const ExperimentConfig& config, std::size_t rep) {
  auto env = make_environment(config.env_id);
  return run_single(config, rep, *env);
}

// All repetitions; `jobs` worker threads. Results do not depend on `jobs`.
inline std::vector<RunSummary> run_experiment(const ExperimentConfig& config, std::size_t jobs = 1) {
  validate(config, *make_environment(config.env_id));
  std::vector<RunSummary> out(config.repetitions);
  jobs = std::clamp<std::size_t>(jobs, 1, config.repetitions);
  if (jobs == 1) {
    for (std::size_t r = 0; r < config.repetitions; ++r) out[r] = run_single(config, r);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t r = next++; r < config.repetitions; r = next++) {
        try {
          out[r] = run_single(config, r);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct RatioPoint {
  std::size_t budget = 0;
  double ratio = 0.0;
};

struct RatioSeries {
  std::vector<RatioPoint> points;
  std::vector<std::size_t> omitted;  // checkpoints with a zero denominator
};

// Median evaluations started (numerator group) over median evaluations
// started (denominator group), per checkpoint.
inline RatioSeries evaluation_ratio(const std::vector<std::vector<Checkpoint>>& numerator,
                                    const std::vector<std::vector<Checkpoint>>& denominator) {
  if (numerator.empty() || denominator.empty()) throw std::invalid_argument("evaluation_ratio: empty group");
  const std::size_t points = numerator.front().size();
  for (const auto* g : {&numerator, &denominator}) {
    for (const auto& s : *g) {
      if (s.size() != points) throw std::invalid_argument("evaluation_ratio: unequal grids");
      for (std::size_t c = 0; c < points; ++c) {
        if (s[c].budget != numerator.front()[c].budget) {
          throw std::invalid_argument("evaluation_ratio: unequal grids");
        }
      }
    }
  }
  RatioSeries out;
  std::vector<double> a, b;
  for (std::size_t c = 0; c < points; ++c) {
    a.clear();
    b.clear();
    for (const auto& s : numerator) a.push_back(static_cast<double>(s[c].evaluations_started));
    for (const auto& s : denominator) b.push_back(static_cast<double>(s[c].evaluations_started));
    const double den = median(b);
    const std::size_t budget = numerator.front()[c].budget;
    if (den == 0.0) {
      out.omitted.push_back(budget);
      continue;
    }
    out.points.push_back({budget, median(a) / den});
  }
  return out;
}

inline std::vector<std::vector<Checkpoint>> series_of(const std::vector<RunSummary>& runs) {
  std::vector<std::vector<Checkpoint>> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.series);
  return out;
}

inline SeriesGroup best_values(const std::vector<std::vector<Checkpoint>>& runs) {
  SeriesGroup out;
  for (const auto& s : runs) {
    auto& row = out.emplace_back();
    for (const auto& c : s) row.push_back(c.best);
  }
  return out;
}

// runs.csv: experiment_id,rep,checkpoint_budget,best_objective,evaluations_started,evaluations_full
inline std::string runs_csv(const std::string& experiment_id, const std::vector<std::vector<Checkpoint>>& runs) {
  std::string s = "experiment_id,rep,checkpoint_budget,best_objective,evaluations_started,evaluations_full\n";
  for (std::size_t rep = 0; rep < runs.size(); ++rep) {
    for (const auto& c : runs[rep]) {
      s += experiment_id;
      s += ',' + std::to_string(rep) + ',' + std::to_string(c.budget) + ',' + format_optional(c.best) + ',' +
           std::to_string(c.evaluations_started) + ',' + std::to_string(c.evaluations_full) + '\n';
    }
  }
  return s;
}

struct RunsTable {
  std::string experiment_id;
  std::vector<std::vector<Checkpoint>> runs;  // indexed by rep

  std::vector<std::size_t> grid() const {
    std::vector<std::size_t> g;
    if (!runs.empty()) {
      for (const auto& c : runs.front()) g.push_back(c.budget);
    }
    return g;
  }
};

inline RunsTable parse_runs_csv(const std::vector<std::string>& lines) {
  if (lines.empty() ||
      lines[0] != "experiment_id,rep,checkpoint_budget,best_objective,evaluations_started,evaluations_full") {
    throw std::runtime_error("runs.csv: unexpected header");
  }
  RunsTable t;
  std::map<std::size_t, std::vector<Checkpoint>> by_rep;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != 6) throw std::runtime_error("runs.csv: line " + std::to_string(i + 1) + " has wrong arity");
    if (t.experiment_id.empty()) t.experiment_id = f[0];
    Checkpoint c{csv::parse_size(f[2]), csv::parse_optional(f[3]), csv::parse_size(f[4]), csv::parse_size(f[5])};
    by_rep[csv::parse_size(f[1])].push_back(c);
  }
  for (auto& [rep, series] : by_rep) t.runs.push_back(std::move(series));
  const auto grid = t.grid();
  for (const auto& s : t.runs) {
    if (s.size() != grid.size()) throw std::runtime_error("runs.csv: repetitions have different grids");
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s[c].budget != grid[c]) throw std::runtime_error("runs.csv: repetitions have different grids");
    }
  }
  return t;
}

}  // namespace gesp
