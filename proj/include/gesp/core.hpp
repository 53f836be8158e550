#pragma once

// Episodic evaluation contract and the trace/record data model.
//
// Time is measured in environment steps. An evaluation of a parameter vector
// runs one episode of at most t_max steps; after step t the cumulative
// objective f[t] is known and the caller may decide to stop.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gesp {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Observation = std::vector<double>;

// Policy parameters. Entries must be finite.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v)) throw std::invalid_argument("ParamVector: non-finite entry");
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

enum class ActionKind {
  Binary,      // 0 = left, 1 = right
  Continuous,  // real value in [-bound, bound]
};

struct ActionSpec {
  ActionKind kind = ActionKind::Continuous;
  double bound = 1.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
};

// A deterministic episodic environment. Same seed and same action sequence
// must give a bit-identical episode.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual ActionSpec action_spec() const = 0;
  virtual std::size_t t_max() const = 0;

  virtual Observation reset(std::uint64_t seed) = 0;
  // Throws std::logic_error when the episode is no longer active.
  virtual StepResult step(double action) = 0;
};

using EnvironmentPtr = std::unique_ptr<Environment>;

enum class Termination {
  Completed,            // ran the full t_max steps
  NaturallyTerminated,  // the environment ended the episode
  EarlyStopped,         // a stopping criterion fired
};

struct EpisodeTrace {
  std::vector<double> cumulative;  // cumulative[t-1] == f[t]
  Termination termination = Termination::Completed;
  std::string stopped_by;  // criterion id when EarlyStopped

  std::size_t steps_run() const { return cumulative.size(); }
  double last() const { return cumulative.empty() ? 0.0 : cumulative.back(); }

  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

inline bool is_full(Termination t) { return t != Termination::EarlyStopped; }

struct EvaluationRecord {
  ParamVector params;
  EpisodeTrace trace;
  double reported_objective = 0.0;
  bool fully_evaluated = false;
  std::uint64_t env_seed = 0;
  std::size_t budget_consumed_at_finish = 0;

  friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

// Step budget for a whole run. A step may only be taken while consumed < limit.
class BudgetClock {
 public:
  explicit BudgetClock(std::size_t limit) : limit_(limit) {}

  std::size_t consumed() const { return consumed_; }
  std::size_t limit() const { return limit_; }
  std::size_t remaining() const { return limit_ - consumed_; }
  bool exhausted() const { return consumed_ >= limit_; }

  // Returns false (and takes nothing) if the budget is spent.
  bool try_take_step() {
    if (consumed_ >= limit_) return false;
    ++consumed_;
    return true;
  }

 private:
  std::size_t limit_;
  std::size_t consumed_ = 0;
};

// Extends a finished trace to t_max by holding its final value. Early-stopped
// traces never feed a reference, so they are rejected.
inline std::vector<double> pad_trace_to_full(const EpisodeTrace& trace, std::size_t t_max) {
  if (trace.termination == Termination::EarlyStopped) {
    throw std::logic_error("pad_trace_to_full: early-stopped trace");
  }
  if (trace.cumulative.empty() || trace.cumulative.size() > t_max) {
    throw std::invalid_argument("pad_trace_to_full: trace length out of range");
  }
  std::vector<double> out(trace.cumulative);
  out.resize(t_max, trace.cumulative.back());
  return out;
}

}  // namespace gesp
