// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gesp.hpp"

using namespace gesp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

ExperimentConfig config(const std::string& env, StoppingPolicy::Kind kind, double frac, std::size_t budget) {
  ExperimentConfig c;
  c.env_id = env;
  c.stopping.kind = kind;
  c.stopping.t_grace_fraction = frac;
  c.budget = budget;
  c.repetitions = 30;
  c.base_seed = 1;
  return c;
}

std::vector<double> finals(const std::vector<RunSummary>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.final_best.value_or(kNegInf));
  return out;
}

TraceArchive archive_of(const std::string& env_id, const std::vector<RunSummary>& standard_runs) {
  const std::size_t t_max = make_environment(env_id)->t_max();
  TraceArchive a{env_id, t_max, {}};
  for (const auto& run : standard_runs) {
    RepArchive rep;
    for (const auto& r : run.records) rep.traces.push_back(archive_trace(r.trace, t_max));
    a.reps.push_back(std::move(rep));
  }
  return a;
}

bool same_records(const std::vector<RunSummary>& a, const std::vector<RunSummary>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].records != b[r].records || a[r].series != b[r].series) return false;
  }
  return true;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Random-walk episodes of random length with occasional natural termination.
class RandomWalk : public Environment {
 public:
  explicit RandomWalk(std::size_t t_max) : t_max_(t_max) {}
  std::string id() const override { return "random_walk"; }
  std::size_t observation_dim() const override { return 1; }
  ActionSpec action_spec() const override { return {ActionKind::Continuous, 1.0}; }
  std::size_t t_max() const override { return t_max_; }
  Observation reset(std::uint64_t seed) override {
    rng_.seed(seed);
    drift_ = std::normal_distribution<double>(0.0, 1.0)(rng_);
    t_ = 0;
    return {0.0};
  }
  StepResult step(double action) override {
    ++t_;
    const double r = drift_ + action + std::normal_distribution<double>(0.0, 1.0)(rng_);
    const bool fall = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < 0.03;
    return {{static_cast<double>(t_)}, r, fall && t_ < t_max_};
  }

 private:
  std::size_t t_max_;
  std::size_t t_ = 0;
  double drift_ = 0.0;
  std::mt19937_64 rng_;
};

struct ConstantAction {
  double a;
  double operator()(std::span<const double>) const { return a; }
};

// Histogram of U over every split of ranks 1..n+m into groups of size n and m.
std::vector<double> enumerate_u(std::size_t n, std::size_t m, std::vector<std::vector<bool>>& masks) {
  const std::size_t total = n + m;
  std::vector<bool> mask(total, false);
  std::fill(mask.end() - static_cast<long>(n), mask.end(), true);
  std::vector<double> hist(n * m + 1, 0.0);
  masks.clear();
  do {
    std::size_t u = 0;
    for (std::size_t i = 0; i < total; ++i) {
      if (!mask[i]) continue;
      for (std::size_t j = 0; j < i; ++j) u += mask[j] ? 0 : 1;
    }
    hist[u] += 1.0;
    masks.push_back(mask);
  } while (std::next_permutation(mask.begin(), mask.end()));
  return hist;
}

}  // namespace

int main() {
  const auto t_all = Clock::now();

  // 1. Cart-pole: the stopping rule never fires.
  std::vector<RunSummary> cp_std;
  {
    auto std_cfg = config("cartpole", StoppingPolicy::Kind::Standard, 0.2, 200000);
    std_cfg.keep_records = true;  // reused by criteria 5 and 6
    cp_std = run_experiment(std_cfg, jobs());
    const auto std_csv = runs_csv(std_cfg.id(), series_of(cp_std));

    bool identical = true, ratio_one = true;
    double slowest = 0.0;
    std::size_t ratio_points = 0;
    for (double frac : {0.002, 0.2, 0.8}) {  // 0.002 * 500 = one step
      const auto t0 = Clock::now();
      const auto g = run_experiment(config("cartpole", StoppingPolicy::Kind::Gesp, frac, 200000), jobs());
      slowest = std::max(slowest, seconds_since(t0));
      identical = identical && runs_csv(std_cfg.id(), series_of(g)) == std_csv;
      const auto ratio = evaluation_ratio(series_of(g), series_of(cp_std));
      ratio_one = ratio_one && ratio.omitted.empty();
      for (const auto& p : ratio.points) ratio_one = ratio_one && p.ratio == 1.0;
      ratio_points += ratio.points.size();
    }
    report(1, identical && ratio_one && slowest < 120.0,
           std::string("runs.csv identical=") + (identical ? "yes" : "no") + " ratio==1 at " +
               std::to_string(ratio_points) + " checkpoints=" + (ratio_one ? "yes" : "no") +
               fmt(" slowest GESP run %.1fs (limit 120s)", slowest));
  }

  // 2. Pendulum speedup at grace 0.2.
  std::vector<RunSummary> pd_std, pd_g02;
  {
    auto std_cfg = config("pendulum", StoppingPolicy::Kind::Standard, 0.2, 400000);
    std_cfg.keep_records = true;
    auto t0 = Clock::now();
    pd_std = run_experiment(std_cfg, jobs());
    const double t_std = seconds_since(t0);
    t0 = Clock::now();
    pd_g02 = run_experiment(config("pendulum", StoppingPolicy::Kind::Gesp, 0.2, 400000), jobs());
    const double t_gesp = seconds_since(t0);

    const auto ratio = evaluation_ratio(series_of(pd_g02), series_of(pd_std));
    const bool has_final = !ratio.points.empty() && ratio.points.back().budget == 400000;
    const double final_ratio = has_final ? ratio.points.back().ratio : 0.0;
    const double med_g = median(finals(pd_g02));
    const double med_s = median(finals(pd_std));
    report(2, has_final && final_ratio >= 1.5 && med_g >= med_s && t_std + t_gesp < 600.0,
           fmt("evaluation ratio %.3f (>= 1.5)", final_ratio) + fmt(" median final GESP %.4g", med_g) +
               fmt(" vs standard %.4g", med_s) + fmt(" runtime %.1fs (limit 600s)", t_std + t_gesp));
  }

  // 3. Constant-rate candidate against a better constant-rate reference.
  {
    bool ok = true;
    std::string detail;
    for (std::size_t g : {10u, 100u, 1000u}) {
      const std::size_t t_max = 4 * g + 10;
      std::vector<double> cand(t_max), best(t_max);
      for (std::size_t t = 1; t <= t_max; ++t) {
        cand[t - 1] = -16.27 * static_cast<double>(t);
        best[t - 1] = -5.0 * static_cast<double>(t);
      }
      BestReference ref(t_max);
      ref.replace(best);
      std::optional<std::size_t> got;
      for (std::size_t t = 1; t <= t_max && !got; ++t) {
        if (should_stop(std::span<const double>(cand).first(t), ref, GraceConfig{g})) got = t;
      }
      // Scan of the raw inequality with f[0] = 0.
      std::optional<std::size_t> scan;
      auto at = [](const std::vector<double>& v, std::size_t t) { return t == 0 ? 0.0 : v[t - 1]; };
      for (std::size_t t = g + 1; t <= t_max && !scan; ++t) {
        if (std::max(at(cand, t), at(cand, t - g)) < std::min(at(best, t), at(best, t - g))) scan = t;
      }
      std::size_t analytic = g + 1;
      while (!(static_cast<double>(analytic - g) > 0.443656 * static_cast<double>(g))) ++analytic;
      ok = ok && got && scan && *got == *scan && *got == analytic;
      detail += "g=" + std::to_string(g) + " stop=" + (got ? std::to_string(*got) : "none") +
                " scan=" + (scan ? std::to_string(*scan) : "none") + " analytic=" + std::to_string(analytic) + "  ";
    }
    report(3, ok, detail);
  }

  // 4. The reported best is always a fully evaluated record and the max over them.
  {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> len(2, 40), evals(1, 30);
    std::uniform_real_distribution<double> action(-1.0, 1.0), frac(0.0, 1.0);
    std::size_t violations = 0, early = 0, natural = 0, total = 0;
    const std::size_t sequences = 10000;
    for (std::size_t s = 0; s < sequences; ++s) {
      RandomWalk env(len(rng));
      const auto policy = StoppingPolicy::gesp(GraceConfig::from_fraction(frac(rng), env.t_max()));
      BestReference ref(env.t_max());
      BudgetClock clock(1000000);
      std::optional<EvaluationRecord> best_rec;
      const std::size_t n = evals(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const auto rec = evaluate_with_stopping(env, ConstantAction{action(rng)}, ParamVector({0.0}), rng(), ref,
                                                policy, clock);
        ++total;
        if (rec->trace.termination == Termination::EarlyStopped) ++early;
        if (rec->trace.termination == Termination::NaturallyTerminated) ++natural;
        if (rec->fully_evaluated && (!best_rec || rec->reported_objective > best_rec->reported_objective)) {
          best_rec = rec;
        }
        const bool updated = maybe_update_best(*rec, ref);
        if (updated && !rec->fully_evaluated) ++violations;
        if (best_rec) {
          if (ref.best_full_objective() != best_rec->reported_objective ||
              !std::ranges::equal(ref.values(), pad_trace_to_full(best_rec->trace, env.t_max()))) {
            ++violations;
          }
        } else if (!ref.empty()) {
          ++violations;
        }
      }
    }
    report(4, violations == 0 && early > 0 && natural > 0,
           std::to_string(sequences) + " sequences, " + std::to_string(total) + " evaluations (" +
               std::to_string(early) + " cut early, " + std::to_string(natural) +
               " natural terminations), violations=" + std::to_string(violations));
  }

  // 5. Grace fraction 1.0 reproduces standard runs exactly.
  {
    std::string detail;
    bool ok = true;
    auto check = [&](const std::string& env, const std::vector<RunSummary>& standard, std::size_t budget) {
      auto g = config(env, StoppingPolicy::Kind::Gesp, 1.0, budget);
      g.keep_records = true;
      const bool same = same_records(run_experiment(g, jobs()), standard);
      ok = ok && same;
      detail += env + (same ? "=identical " : "=DIFFERENT ");
    };
    check("cartpole", cp_std, 200000);
    check("pendulum", pd_std, 400000);
    auto ramp_std = config("ramp:-3:100", StoppingPolicy::Kind::Standard, 0.2, 50000);
    ramp_std.keep_records = true;
    check("ramp:-3:100", run_experiment(ramp_std, jobs()), 50000);
    report(5, ok, detail);
  }

  // 6. Replay invariants on archives of standard runs.
  {
    const auto t0 = Clock::now();
    auto rec_cfg = config("pendulum", StoppingPolicy::Kind::Gesp, 0.2, 400000);
    const auto pd_archive = record_archive(rec_cfg, jobs());
    const double t_record = seconds_since(t0);
    const auto pd_expected = archive_of("pendulum", pd_std);
    const bool archive_matches = pd_archive.env_id == pd_expected.env_id && pd_archive.t_max == pd_expected.t_max &&
                                 pd_archive.reps == pd_expected.reps;
    const auto cp_archive = archive_of("cartpole", cp_std);

    const auto cp_rows = replay_report(cp_archive, default_grace_fractions());
    const auto pd_rows = replay_report(pd_archive, default_grace_fractions());
    bool cp_ones = true;
    for (const auto& r : cp_rows) {
      cp_ones = cp_ones && r.best_not_missed == 1.0 && r.steps_computed == 1.0 && r.improves_result == 1.0;
    }
    const auto& pd_full = pd_rows.back();
    const bool full_ok = pd_full.grace_fraction == 1.0 && pd_full.best_not_missed == 1.0 &&
                         pd_full.steps_computed == 1.0 && cp_rows.back().best_not_missed == 1.0;
    double bnm_02 = -1.0, steps_02 = -1.0;
    for (const auto& r : pd_rows) {
      if (r.grace_fraction == 0.2) {
        bnm_02 = r.best_not_missed;
        steps_02 = r.steps_computed;
      }
    }
    const double runtime = seconds_since(t0);
    report(6, archive_matches && cp_ones && full_ok && bnm_02 >= 0.7 && runtime < 900.0,
           std::string("cartpole all ones=") + (cp_ones ? "yes" : "no") +
               " grace 1.0 exact=" + (full_ok ? "yes" : "no") + fmt(" pendulum best_not_missed@0.2=%.3f (>= 0.7)", bnm_02) +
               fmt(" steps_computed@0.2=%.3f", steps_02) + fmt(" runtime %.1fs", runtime) +
               fmt(" (recording %.1fs; limit 900s)", t_record));
  }

  // 7. Mann-Whitney against exhaustive enumeration, and self-comparison.
  {
    double worst = 0.0;
    std::size_t cases = 0;
    std::vector<std::vector<bool>> masks;
    for (std::size_t n = 1; n < 12; ++n) {
      for (std::size_t m = 1; n + m <= 12; ++m) {
        const auto hist = enumerate_u(n, m, masks);
        double all = 0.0;
        for (double h : hist) all += h;
        for (const auto& mask : masks) {
          std::vector<double> a, b;
          std::size_t u = 0;
          for (std::size_t i = 0; i < mask.size(); ++i) {
            (mask[i] ? a : b).push_back(static_cast<double>(i) * 1.5 - 3.0);
            if (mask[i]) {
              for (std::size_t j = 0; j < i; ++j) u += mask[j] ? 0 : 1;
            }
          }
          double le = 0.0, ge = 0.0;
          for (std::size_t k = 0; k < hist.size(); ++k) {
            if (k <= u) le += hist[k];
            if (k >= u) ge += hist[k];
          }
          const double oracle = std::min(1.0, 2.0 * std::min(le, ge) / all);
          worst = std::max(worst, std::abs(mann_whitney_two_sided(a, b).p_value - oracle));
          ++cases;
        }
      }
    }
    const auto grid = checkpoint_grid(400000, 100);
    const auto group = best_values(series_of(pd_std));
    std::size_t self_sig = 0, rows = 0;
    for (const auto& r : compare_trajectories(grid, group, group, 0.01)) {
      self_sig += r.significant ? 1 : 0;
      ++rows;
    }
    // Two disjoint halves of one configuration (independent seeds).
    const SeriesGroup first(group.begin(), group.begin() + 15), second(group.begin() + 15, group.end());
    std::size_t half_sig = 0;
    for (const auto& r : compare_trajectories(grid, first, second, 0.01)) half_sig += r.significant ? 1 : 0;
    const double self_frac = static_cast<double>(self_sig) / static_cast<double>(rows);
    const double half_frac = static_cast<double>(half_sig) / static_cast<double>(rows);
    report(7, worst <= 1e-9 && self_frac <= 0.05 && half_frac <= 0.05,
           std::to_string(cases) + " rank arrangements" + fmt(", max |p - oracle| = %.3g", worst) +
               fmt("; self-comparison significant on %.0f%% of grid", 100.0 * self_frac) +
               fmt(", split-half on %.0f%% (limit 5%%)", 100.0 * half_frac));
  }

  // 8. Grace fraction 0.0 against 0.2 on the pendulum.
  {
    const auto g00 = run_experiment(config("pendulum", StoppingPolicy::Kind::Gesp, 0.0, 400000), jobs());
    const auto f00 = finals(g00);
    const auto f02 = finals(pd_g02);
    const double m00 = median(f00), m02 = median(f02);
    const double p = mann_whitney_greater(f02, f00);
    report(8, m00 <= m02 && p < 0.05,
           fmt("median final @0.0 = %.4g", m00) + fmt(" <= @0.2 = %.4g", m02) +
               fmt("; one-sided Mann-Whitney p = %.3g (< 0.05)", p));
  }

  std::printf("total runtime %.1fs, %d failing\n", seconds_since(t_all), failures);
  return failures == 0 ? 0 : 1;
}
