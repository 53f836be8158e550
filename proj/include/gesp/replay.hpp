#pragma once

// Offline grace-period analysis: full traces recorded without early stopping
// are replayed in their original order under the stopping rule, assuming the
// search trajectory would not have changed.
//
// Archive file (one per repetition):
//   env_id,t_max,evaluations
//   <env_id>,<t_max>,<count>
//   then one row per evaluation with t_max comma-separated cumulative values;
//   cells past a natural termination are left empty.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gesp/core.hpp"
#include "gesp/format.hpp"
#include "gesp/gesp.hpp"
#include "gesp/harness.hpp"

namespace gesp {

struct ArchivedTrace {
  std::vector<double> padded;  // length t_max
  std::size_t steps_run = 0;   // < t_max only after natural termination

  double final_objective() const { return padded.back(); }
  friend bool operator==(const ArchivedTrace&, const ArchivedTrace&) = default;
};

struct RepArchive {
  std::vector<ArchivedTrace> traces;  // evaluation order
  friend bool operator==(const RepArchive&, const RepArchive&) = default;
};

struct TraceArchive {
  std::string env_id;
  std::size_t t_max = 0;
  std::vector<RepArchive> reps;

  void validate() const {
    if (t_max == 0) throw std::invalid_argument("archive: t_max must be positive");
    for (const auto& rep : reps) {
      for (const auto& tr : rep.traces) {
        if (tr.padded.size() != t_max) throw std::invalid_argument("archive: trace length differs from t_max");
        if (tr.steps_run == 0 || tr.steps_run > t_max) throw std::invalid_argument("archive: bad steps_run");
      }
    }
  }
};

inline ArchivedTrace archive_trace(const EpisodeTrace& trace, std::size_t t_max) {
  return {pad_trace_to_full(trace, t_max), trace.steps_run()};
}

// Runs every repetition with stopping forced to standard and keeps each full trace.
inline TraceArchive record_archive(ExperimentConfig config, std::size_t jobs = 1) {
  config.stopping = StoppingSpec{};
  config.keep_records = true;
  const auto env = make_environment(config.env_id);
  TraceArchive archive{config.env_id, env->t_max(), {}};
  for (auto& run : run_experiment(config, jobs)) {
    RepArchive rep;
    rep.traces.reserve(run.records.size());
    for (const auto& r : run.records) rep.traces.push_back(archive_trace(r.trace, archive.t_max));
    archive.reps.push_back(std::move(rep));
  }
  return archive;
}

struct ReplayResult {
  std::vector<std::optional<std::size_t>> stopped_at;  // per evaluation; nullopt = not cut
  std::optional<std::size_t> best_index;               // evaluation that ended as best
  double best_objective = kNegInf;
  std::size_t steps_total = 0;
  std::size_t steps_archived = 0;
};

// Simulates the evaluation loop over one repetition's traces.
inline ReplayResult replay_with_gesp(const RepArchive& rep, std::size_t t_max, const GraceConfig& grace) {
  ReplayResult res;
  res.stopped_at.reserve(rep.traces.size());
  BestReference ref(t_max);
  for (std::size_t i = 0; i < rep.traces.size(); ++i) {
    const auto& tr = rep.traces[i];
    std::span<const double> full(tr.padded);
    std::optional<std::size_t> cut;
    for (std::size_t t = 1; t <= tr.steps_run; ++t) {
      if (t == tr.steps_run && tr.steps_run < t_max) break;  // natural termination wins
      if (should_stop(full.first(t), ref, grace)) {
        cut = t;
        break;
      }
    }
    res.steps_total += cut ? *cut : tr.steps_run;
    res.steps_archived += tr.steps_run;
    res.stopped_at.push_back(cut);
    if (!cut && tr.final_objective() > ref.best_full_objective()) {
      ref.replace(tr.padded);
      res.best_index = i;
      res.best_objective = tr.final_objective();
    }
  }
  return res;
}

inline GraceConfig replay_grace(double fraction, std::size_t t_max) { return GraceConfig::from_fraction(fraction, t_max); }

// Index of the first evaluation attaining the maximum final objective.
inline std::optional<std::size_t> standard_best_index(const RepArchive& rep) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rep.traces.size(); ++i) {
    if (!best || rep.traces[i].final_objective() > rep.traces[*best].final_objective()) best = i;
  }
  return best;
}

struct ReplayRow {
  double grace_fraction = 0.0;
  double best_not_missed = 0.0;
  double steps_computed = 0.0;
  double improves_result = 0.0;
};

inline ReplayRow compute_proportions(double grace_fraction, const std::vector<ReplayResult>& replays,
                                     const TraceArchive& archive) {
  if (replays.size() != archive.reps.size()) throw std::invalid_argument("one replay per repetition expected");
  ReplayRow row;
  row.grace_fraction = grace_fraction;
  std::size_t same = 0, improves = 0, steps = 0, archived = 0;
  for (std::size_t r = 0; r < replays.size(); ++r) {
    const auto std_best = standard_best_index(archive.reps[r]);
    const auto& rp = replays[r];
    if (rp.best_index == std_best) ++same;
    const double std_obj = std_best ? archive.reps[r].traces[*std_best].final_objective() : kNegInf;
    if (rp.best_objective >= std_obj) ++improves;
    steps += rp.steps_total;
    archived += rp.steps_archived;
  }
  const double reps = static_cast<double>(replays.size());
  row.best_not_missed = reps > 0 ? static_cast<double>(same) / reps : 1.0;
  row.improves_result = reps > 0 ? static_cast<double>(improves) / reps : 1.0;
  row.steps_computed = archived > 0 ? static_cast<double>(steps) / static_cast<double>(archived) : 1.0;
  return row;
}

inline std::vector<double> default_grace_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 20; ++i) f.push_back(i / 20.0);
  return f;
}

inline std::vector<ReplayRow> replay_report(const TraceArchive& archive, const std::vector<double>& fractions) {
  archive.validate();
  std::vector<ReplayRow> rows;
  for (double frac : fractions) {
    const auto grace = replay_grace(frac, archive.t_max);
    std::vector<ReplayResult> replays;
    replays.reserve(archive.reps.size());
    for (const auto& rep : archive.reps) replays.push_back(replay_with_gesp(rep, archive.t_max, grace));
    rows.push_back(compute_proportions(frac, replays, archive));
  }
  return rows;
}

inline std::string replay_report_csv(const std::vector<ReplayRow>& rows) {
  std::string s = "grace_fraction,best_not_missed,steps_computed,improves_result\n";
  for (const auto& r : rows) {
    s += format_number(r.grace_fraction) + ',' + format_number(r.best_not_missed) + ',' +
         format_number(r.steps_computed) + ',' + format_number(r.improves_result) + '\n';
  }
  return s;
}

inline std::string archive_csv(const std::string& env_id, std::size_t t_max, const RepArchive& rep) {
  std::string s = "env_id,t_max,evaluations\n";
  s += env_id + ',' + std::to_string(t_max) + ',' + std::to_string(rep.traces.size()) + '\n';
  for (const auto& tr : rep.traces) {
    for (std::size_t t = 0; t < t_max; ++t) {
      if (t > 0) s += ',';
      if (t < tr.steps_run) s += format_number(tr.padded[t]);
    }
    s += '\n';
  }
  return s;
}

struct ParsedRepArchive {
  std::string env_id;
  std::size_t t_max = 0;
  RepArchive rep;
};

inline ParsedRepArchive parse_archive_csv(const std::vector<std::string>& lines) {
  if (lines.size() < 2 || lines[0] != "env_id,t_max,evaluations") {
    throw std::runtime_error("archive: missing header");
  }
  const auto head = csv::split_line(lines[1]);
  if (head.size() != 3) throw std::runtime_error("archive: malformed header row");
  ParsedRepArchive out;
  out.env_id = head[0];
  out.t_max = csv::parse_size(head[1]);
  const std::size_t count = csv::parse_size(head[2]);
  if (out.t_max == 0) throw std::runtime_error("archive: t_max must be positive");
  std::size_t row = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split_line(lines[i]);
    if (cells.size() != out.t_max) {
      throw std::runtime_error("archive: row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(out.t_max));
    }
    ArchivedTrace tr;
    tr.padded.reserve(out.t_max);
    for (const auto& c : cells) {
      if (c.empty()) {
        if (tr.padded.empty()) throw std::runtime_error("archive: row starts with an empty cell");
        tr.padded.push_back(tr.padded.back());
      } else {
        if (tr.padded.size() != tr.steps_run) throw std::runtime_error("archive: value after an empty cell");
        tr.padded.push_back(csv::parse_double(c));
        ++tr.steps_run;
      }
    }
    out.rep.traces.push_back(std::move(tr));
    ++row;
  }
  if (row != count) throw std::runtime_error("archive: header says " + std::to_string(count) + " rows, found " +
                                             std::to_string(row));
  return out;
}

inline void write_archive(const TraceArchive& archive, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < archive.reps.size(); ++k) {
    csv::write_file((dir / ("rep_" + std::to_string(k) + ".csv")).string(),
                    archive_csv(archive.env_id, archive.t_max, archive.reps[k]));
  }
}

// Reads rep_0.csv, rep_1.csv, ... until the first missing index.
inline TraceArchive read_archive(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("archive directory not found: " + dir.string());
  TraceArchive archive;
  for (std::size_t k = 0;; ++k) {
    const auto path = dir / ("rep_" + std::to_string(k) + ".csv");
    if (!std::filesystem::exists(path)) break;
    auto parsed = parse_archive_csv(csv::read_lines(path.string()));
    if (k == 0) {
      archive.env_id = parsed.env_id;
      archive.t_max = parsed.t_max;
    } else if (parsed.env_id != archive.env_id || parsed.t_max != archive.t_max) {
      throw std::runtime_error("archive: " + path.string() + " disagrees with rep_0.csv header");
    }
    archive.reps.push_back(std::move(parsed.rep));
  }
  if (archive.reps.empty()) throw std::runtime_error("archive: no rep_<k>.csv files in " + dir.string());
  return archive;
}

}  // namespace gesp
