// Command-line driver: budgeted runs, pointwise comparisons, grace sweeps and
// replay analysis. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gesp.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunFlags {
  std::string env = "cartpole";
  std::string stopping = "standard";
  double t_grace = 0.2;
  std::string criterion;
  std::optional<double> monotone_k;
  std::size_t budget = 200000;
  std::size_t reps = 30;
  std::uint64_t seed = 1;
  std::size_t grid = 100;
  std::size_t jobs = 1;
  std::string id;
  std::string out = "out";
};

gesp::StoppingSpec parse_stopping(const RunFlags& f) {
  gesp::StoppingSpec spec;
  spec.t_grace_fraction = f.t_grace;
  std::optional<gesp::ProblemSpecificCriterion> crit;
  try {
    if (!f.criterion.empty()) crit = gesp::parse_criterion(f.criterion);
    if (f.stopping.rfind("problem:", 0) == 0) crit = gesp::parse_criterion(f.stopping.substr(8));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (f.stopping == "standard") {
    spec.kind = gesp::StoppingPolicy::Kind::Standard;
  } else if (f.stopping == "gesp") {
    spec.kind = gesp::StoppingPolicy::Kind::Gesp;
  } else if (f.stopping == "problem" || f.stopping.rfind("problem:", 0) == 0) {
    spec.kind = gesp::StoppingPolicy::Kind::ProblemSpecific;
  } else if (f.stopping == "composite") {
    spec.kind = gesp::StoppingPolicy::Kind::Composite;
  } else {
    throw UsageError("unknown stopping policy '" + f.stopping + "'");
  }
  if ((spec.kind == gesp::StoppingPolicy::Kind::ProblemSpecific ||
       spec.kind == gesp::StoppingPolicy::Kind::Composite) &&
      !crit) {
    throw UsageError("--stopping " + f.stopping + " needs a criterion (problem:<spec> or --criterion <spec>)");
  }
  spec.criterion = crit;
  if (f.monotone_k) spec.transform = gesp::MonotoneTransform{*f.monotone_k, true};
  return spec;
}

gesp::ExperimentConfig make_config(const RunFlags& f, gesp::StoppingSpec stopping) {
  gesp::ExperimentConfig c;
  c.experiment_id = f.id;
  c.env_id = f.env;
  c.stopping = std::move(stopping);
  c.budget = f.budget;
  c.repetitions = f.reps;
  c.base_seed = f.seed;
  c.sample_grid = f.grid;
  try {
    gesp::validate(c, *gesp::make_environment(c.env_id));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string manifest(const std::string& command, const gesp::ExperimentConfig& c) {
  std::string s;
  s += "toolkit=gesp\n";
  s += std::string("version=") + gesp::kVersion + "\n";
  s += "command=" + command + "\n";
  s += "experiment_id=" + c.id() + "\n";
  s += "env=" + c.env_id + "\n";
  s += "stopping=" + gesp::stopping_name(c.stopping.kind) + "\n";
  s += "t_grace_fraction=" + gesp::format_number(c.stopping.t_grace_fraction) + "\n";
  s += "criterion=" + (c.stopping.criterion ? gesp::criterion_id(*c.stopping.criterion) : std::string()) + "\n";
  s += "monotone_k=" + (c.stopping.transform.enabled ? gesp::format_number(c.stopping.transform.k) : std::string()) +
       "\n";
  s += "budget=" + std::to_string(c.budget) + "\n";
  s += "repetitions=" + std::to_string(c.repetitions) + "\n";
  s += "base_seed=" + std::to_string(c.base_seed) + "\n";
  s += "sample_grid=" + std::to_string(c.sample_grid) + "\n";
  s += "initial_sigma=" + gesp::format_number(c.initial_sigma) + "\n";
  s += "env_seeding=" + gesp::seeding_name(c.seeding) + "\n";
  s += "hidden_units=" + std::to_string(c.hidden_units.value_or(gesp::default_hidden_units(c.env_id))) + "\n";
  return s;
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : gesp::csv::split_line(text)) {
    double v = 0.0;
    try {
      v = gesp::csv::parse_double(part);
    } catch (const std::exception&) {
      throw UsageError("bad fraction '" + part + "'");
    }
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("fraction " + part + " outside [0, 1]");
    out.push_back(v);
  }
  return out;
}

void add_run_options(CLI::App* sub, RunFlags& f, bool with_stopping) {
  sub->add_option("--env", f.env, "Environment id: cartpole, pendulum, ramp:<reward>:<tmax>");
  if (with_stopping) {
    sub->add_option("--stopping", f.stopping, "standard | gesp | problem:<criterion> | composite");
    sub->add_option("--t-grace", f.t_grace, "Grace period as a fraction of t_max")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--criterion", f.criterion,
                    "Problem-specific criterion: noprogress:<w> | bounds:<i>:<lo>:<hi> | speedfloor:<rate>");
    sub->add_option("--monotone-k", f.monotone_k, "Enable the monotone transform with per-step offset k");
    sub->add_option("--id", f.id, "Experiment id written to runs.csv (default: env id)");
  }
  sub->add_option("--budget", f.budget, "Step budget per repetition");
  sub->add_option("--reps", f.reps, "Repetitions")->check(CLI::PositiveNumber);
  sub->add_option("--seed", f.seed, "Base seed")->envname("GESP_SEED");
  sub->add_option("--jobs", f.jobs, "Parallel repetitions")->check(CLI::PositiveNumber);
  sub->add_option("--out", f.out, "Output directory");
}

int cmd_run(const RunFlags& f) {
  const auto config = make_config(f, parse_stopping(f));
  fs::create_directories(f.out);
  gesp::csv::write_file((fs::path(f.out) / "manifest.txt").string(), manifest("run", config));
  const auto runs = gesp::run_experiment(config, f.jobs);
  gesp::csv::write_file((fs::path(f.out) / "runs.csv").string(), gesp::runs_csv(config.id(), gesp::series_of(runs)));
  return 0;
}

gesp::RunsTable load_runs(const std::string& dir) {
  const auto path = fs::path(dir) / "runs.csv";
  if (!fs::exists(path)) throw std::runtime_error("no runs.csv in '" + dir + "'");
  return gesp::parse_runs_csv(gesp::csv::read_lines(path.string()));
}

int cmd_compare(const std::string& a_dir, const std::string& b_dir, double alpha, const std::string& out) {
  const auto a = load_runs(a_dir);
  const auto b = load_runs(b_dir);
  if (a.grid() != b.grid()) throw std::runtime_error("checkpoint grids of the two groups differ");
  const auto grid = a.grid();
  const auto rows = gesp::compare_trajectories(grid, gesp::best_values(a.runs), gesp::best_values(b.runs), alpha);
  const auto ratio = gesp::evaluation_ratio(a.runs, b.runs);
  for (auto budget : ratio.omitted) {
    std::cerr << "warning: no evaluations in group b at budget " << budget << "; ratio omitted\n";
  }
  fs::create_directories(out);
  gesp::csv::write_file((fs::path(out) / "comparison.csv").string(), gesp::comparison_csv(rows));
  std::string r = "checkpoint_budget,ratio\n";
  for (const auto& p : ratio.points) r += std::to_string(p.budget) + ',' + gesp::format_number(p.ratio) + '\n';
  gesp::csv::write_file((fs::path(out) / "ratio.csv").string(), r);
  return 0;
}

int cmd_sweep(const RunFlags& f, const std::vector<double>& fractions) {
  RunFlags g = f;
  g.stopping = "gesp";
  auto base = make_config(g, parse_stopping(g));
  fs::create_directories(f.out);
  gesp::csv::write_file((fs::path(f.out) / "manifest.txt").string(), manifest("sweep-tgrace", base));
  std::string sweep = "grace_fraction,rep,final_best\n";
  for (double frac : fractions) {
    auto config = base;
    config.stopping.t_grace_fraction = frac;
    const auto runs = gesp::run_experiment(config, f.jobs);
    const auto dir = fs::path(f.out) / ("grace_" + gesp::format_number(frac));
    fs::create_directories(dir);
    gesp::csv::write_file((dir / "runs.csv").string(), gesp::runs_csv(config.id(), gesp::series_of(runs)));
    for (std::size_t r = 0; r < runs.size(); ++r) {
      sweep += gesp::format_number(frac) + ',' + std::to_string(r) + ',' + gesp::format_optional(runs[r].final_best) +
               '\n';
    }
  }
  gesp::csv::write_file((fs::path(f.out) / "sweep.csv").string(), sweep);
  return 0;
}

int cmd_record_archive(const RunFlags& f) {
  RunFlags g = f;
  g.stopping = "standard";
  const auto config = make_config(g, parse_stopping(g));
  fs::create_directories(f.out);
  gesp::csv::write_file((fs::path(f.out) / "manifest.txt").string(), manifest("record-archive", config));
  gesp::write_archive(gesp::record_archive(config, f.jobs), f.out);
  return 0;
}

int cmd_replay(const std::string& archive_dir, const std::vector<double>& fractions, const std::string& out) {
  const auto archive = gesp::read_archive(archive_dir);
  const auto rows = gesp::replay_report(archive, fractions);
  fs::create_directories(out);
  gesp::csv::write_file((fs::path(out) / "replay_report.csv").string(), gesp::replay_report_csv(rows));
  return 0;
}

// Long-format summary of runs.csv: one row per (checkpoint, metric).
int cmd_report(const std::string& in_dir, std::string out_file) {
  const auto t = load_runs(in_dir);
  if (out_file.empty()) out_file = (fs::path(in_dir) / "report.csv").string();
  std::string s = "experiment_id,checkpoint_budget,metric,value\n";
  const auto grid = t.grid();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<double> best, started, full;
    for (const auto& run : t.runs) {
      if (run[c].best) best.push_back(*run[c].best);
      started.push_back(static_cast<double>(run[c].evaluations_started));
      full.push_back(static_cast<double>(run[c].evaluations_full));
    }
    auto emit = [&](const char* metric, std::optional<double> v) {
      s += t.experiment_id + ',' + std::to_string(grid[c]) + ',' + metric + ',' + gesp::format_optional(v) + '\n';
    };
    const bool has = !best.empty();
    emit("best_median", has ? std::optional(gesp::median(best)) : std::nullopt);
    emit("best_q25", has ? std::optional(gesp::quantile(best, 0.25)) : std::nullopt);
    emit("best_q75", has ? std::optional(gesp::quantile(best, 0.75)) : std::nullopt);
    emit("evaluations_started_median", gesp::median(started));
    emit("evaluations_full_median", gesp::median(full));
  }
  if (auto parent = fs::path(out_file).parent_path(); !parent.empty()) fs::create_directories(parent);
  gesp::csv::write_file(out_file, s);
  return 0;
}

// Plain key=value file; keys are long option names without dashes. Options
// already given on the command line (or via environment) keep their value.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  const auto lines = gesp::csv::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i].substr(0, lines[i].find('#'));
    const auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(i + 1) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError(path + ":" + std::to_string(i + 1) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(trim(line.substr(eq + 1)));
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early stopping benchmarks for direct policy search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gesp::kVersion));

  std::map<CLI::App*, std::string> config_paths;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub], "key=value config file; flags override it");
  };

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a group of budgeted repetitions and write runs.csv");
  add_config(run);
  add_run_options(run, run_flags, true);
  run->add_option("--grid", run_flags.grid, "Number of budget checkpoints")->check(CLI::PositiveNumber);

  std::string a_dir, b_dir, cmp_out = "compare";
  double alpha = 0.01;
  auto* compare = app.add_subcommand("compare", "Pointwise Mann-Whitney comparison of two run groups");
  add_config(compare);
  compare->add_option("--a", a_dir, "First run directory (required)");
  compare->add_option("--b", b_dir, "Second run directory (required)");
  compare->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  compare->add_option("--out", cmp_out, "Output directory");

  RunFlags sweep_flags;
  std::string sweep_fractions = "0,0.05,0.2,0.5,1.0";
  auto* sweep = app.add_subcommand("sweep-tgrace", "Run one group per grace fraction and write sweep.csv");
  add_config(sweep);
  add_run_options(sweep, sweep_flags, false);
  sweep->add_option("--grid", sweep_flags.grid, "Number of budget checkpoints")->check(CLI::PositiveNumber);
  sweep->add_option("--fractions", sweep_fractions, "Comma-separated grace fractions");

  RunFlags archive_flags;
  archive_flags.out = "archive";
  auto* record = app.add_subcommand("record-archive", "Record full traces of standard runs");
  add_config(record);
  add_run_options(record, archive_flags, false);

  std::string archive_dir = "archive", replay_fractions, replay_out = "replay";
  auto* replay = app.add_subcommand("replay", "Replay an archive under several grace fractions");
  add_config(replay);
  replay->add_option("--archive", archive_dir, "Archive directory");
  replay->add_option("--fractions", replay_fractions, "Comma-separated grace fractions (default 0,0.05,...,1)");
  replay->add_option("--out", replay_out, "Output directory");

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Emit long-format summary CSV of a run directory");
  report->add_option("--in", report_in, "Run directory containing runs.csv")->required();
  report->add_option("--out", report_out, "Output file (default <in>/report.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (auto* sub : {run, compare, sweep, record, replay}) {
      if (*sub) apply_config_file(sub, config_paths[sub]);
    }
    if (*run) return cmd_run(run_flags);
    if (*compare && (a_dir.empty() || b_dir.empty())) throw UsageError("compare needs --a and --b");
    if (*compare) return cmd_compare(a_dir, b_dir, alpha, cmp_out);
    if (*sweep) return cmd_sweep(sweep_flags, parse_fractions(sweep_fractions));
    if (*record) return cmd_record_archive(archive_flags);
    if (*replay) {
      const auto fractions =
          replay_fractions.empty() ? gesp::default_grace_fractions() : parse_fractions(replay_fractions);
      return cmd_replay(archive_dir, fractions, replay_out);
    }
    if (*report) return cmd_report(report_in, report_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
