#pragma once

// Generalized early stopping for direct policy search.
//
// A candidate is stopped at step t > t_grace when
//
//   max(f[t](cand), f[t - t_grace](cand)) < min(f[t](best), f[t - t_grace](best))
//
// where best is the best *fully evaluated* solution so far. Only fully
// evaluated candidates may replace the best; the reference curve is swapped
// out as a whole.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gesp/core.hpp"
#include "gesp/criteria.hpp"

namespace gesp {

// Per-step cumulative objective of the current best full evaluation.
class BestReference {
 public:
  explicit BestReference(std::size_t t_max) : values_(t_max, kNegInf) {
    if (t_max == 0) throw std::invalid_argument("BestReference: t_max must be positive");
  }

  std::size_t t_max() const { return values_.size(); }
  bool empty() const { return best_full_objective_ == kNegInf; }
  double best_full_objective() const { return best_full_objective_; }
  // 1-based step index, like f[t].
  double at(std::size_t t) const { return values_[t - 1]; }
  std::span<const double> values() const { return values_; }

  void replace(std::vector<double> padded) {
    if (padded.size() != values_.size()) {
      throw std::invalid_argument("BestReference: reference length mismatch");
    }
    values_ = std::move(padded);
    best_full_objective_ = values_.back();
  }

 private:
  std::vector<double> values_;
  double best_full_objective_ = kNegInf;
};

// Grace period in steps, built from a fraction of t_max (rounded half up).
struct GraceConfig {
  std::size_t t_grace = 0;

  static GraceConfig from_fraction(double fraction, std::size_t t_max) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
      throw std::invalid_argument("t_grace fraction must lie in [0, 1]");
    }
    return GraceConfig{static_cast<std::size_t>(std::floor(fraction * static_cast<double>(t_max) + 0.5))};
  }
};

// Adds t*k to the cumulative objective so that it becomes nondecreasing when
// k is at least the largest per-step loss. Off by default.
struct MonotoneTransform {
  double k = 0.0;
  bool enabled = false;
};

inline std::vector<double> apply_monotone_transform(std::span<const double> trace_prefix,
                                                    const MonotoneTransform& transform) {
  if (!transform.enabled) throw std::logic_error("apply_monotone_transform: transform disabled");
  std::vector<double> out(trace_prefix.begin(), trace_prefix.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<double>(i + 1) * transform.k;
  return out;
}

// Checks the stopping condition for a candidate after step t = trace_prefix.size().
// Ties continue; a -inf reference never stops anything.
inline bool should_stop(std::span<const double> trace_prefix, const BestReference& ref,
                        const GraceConfig& grace) {
  const std::size_t t = trace_prefix.size();
  if (t == 0 || t > ref.t_max()) throw std::invalid_argument("should_stop: t out of range");
  if (t <= grace.t_grace) return false;
  const std::size_t back = t - grace.t_grace;  // >= 1 because of the gate
  const double cand = std::max(trace_prefix[t - 1], trace_prefix[back - 1]);
  const double best = std::min(ref.at(t), ref.at(back));
  return cand < best;
}

class StoppingPolicy {
 public:
  enum class Kind { Standard, Gesp, ProblemSpecific, Composite };

  static StoppingPolicy standard() { return StoppingPolicy(Kind::Standard); }
  static StoppingPolicy gesp(GraceConfig grace) {
    StoppingPolicy p(Kind::Gesp);
    p.grace_ = grace;
    return p;
  }
  static StoppingPolicy problem_specific(ProblemSpecificCriterion c) {
    StoppingPolicy p(Kind::ProblemSpecific);
    p.criterion_ = c;
    return p;
  }
  static StoppingPolicy composite(GraceConfig grace, ProblemSpecificCriterion c) {
    StoppingPolicy p(Kind::Composite);
    p.grace_ = grace;
    p.criterion_ = c;
    return p;
  }

  Kind kind() const { return kind_; }
  bool uses_gesp() const { return kind_ == Kind::Gesp || kind_ == Kind::Composite; }
  const GraceConfig& grace() const { return grace_; }
  const std::optional<ProblemSpecificCriterion>& criterion() const { return criterion_; }

  MonotoneTransform transform;

  // Returns the id of the criterion that fires after the latest step, if any.
  std::optional<std::string> check(std::span<const double> trace_prefix, const BestReference& ref,
                                   std::span<const double> observation) const {
    if (uses_gesp() && should_stop(trace_prefix, ref, grace_)) return std::string("gesp");
    if (criterion_ && evaluate_criterion(*criterion_, trace_prefix, observation)) {
      return criterion_id(*criterion_);
    }
    return std::nullopt;
  }

 private:
  explicit StoppingPolicy(Kind k) : kind_(k) {}

  Kind kind_;
  GraceConfig grace_{};
  std::optional<ProblemSpecificCriterion> criterion_;
};

// Runs one episode of `env` under `policy`, stopping per `stopping`.
// Returns std::nullopt if the budget runs out mid-episode; that evaluation
// is discarded, but the steps it took stay consumed.
template <typename Policy>
std::optional<EvaluationRecord> evaluate_with_stopping(Environment& env, const Policy& policy,
                                                       const ParamVector& params,
                                                       std::uint64_t env_seed,
                                                       const BestReference& ref,
                                                       const StoppingPolicy& stopping,
                                                       BudgetClock& clock) {
  const std::size_t t_max = env.t_max();
  if (ref.t_max() != t_max) throw std::invalid_argument("reference length differs from t_max");
  if (clock.exhausted()) throw std::logic_error("evaluate_with_stopping: no budget left");

  EvaluationRecord rec;
  rec.params = params;
  rec.env_seed = env_seed;
  auto& trace = rec.trace;
  trace.cumulative.reserve(t_max);

  Observation obs = env.reset(env_seed);
  double raw = 0.0;
  while (true) {
    if (!clock.try_take_step()) return std::nullopt;
    StepResult sr = env.step(policy(obs));
    raw += sr.reward;
    const double t = static_cast<double>(trace.cumulative.size() + 1);
    trace.cumulative.push_back(stopping.transform.enabled ? raw + t * stopping.transform.k : raw);
    obs = std::move(sr.observation);

    // A naturally finished episode has a final objective; nothing left to stop.
    if (sr.terminated) {
      trace.termination = Termination::NaturallyTerminated;
      break;
    }
    if (auto fired = stopping.check(trace.cumulative, ref, obs)) {
      trace.termination = Termination::EarlyStopped;
      trace.stopped_by = *fired;
      break;
    }
    if (trace.cumulative.size() == t_max) {
      trace.termination = Termination::Completed;
      break;
    }
  }
  rec.reported_objective = trace.last();
  rec.fully_evaluated = is_full(trace.termination);
  rec.budget_consumed_at_finish = clock.consumed();
  return rec;
}

// Replaces the reference iff the record is a full evaluation that strictly
// beats the current best.
inline bool maybe_update_best(const EvaluationRecord& record, BestReference& ref) {
  if (!record.fully_evaluated) return false;
  if (!(record.reported_objective > ref.best_full_objective())) return false;
  ref.replace(pad_trace_to_full(record.trace, ref.t_max()));
  return true;
}

}  // namespace gesp
