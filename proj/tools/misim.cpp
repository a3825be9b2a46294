#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "misim/csv.hpp"
#include "misim/error.hpp"
#include "misim/metrics.hpp"
#include "misim/msm.hpp"
#include "misim/runner.hpp"
#include "misim/scenario.hpp"

using namespace misim;

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::string> scenarios, models, out, profile, preset;
  std::optional<int> replicates, workers, chains, burn_in, samples;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool dump_datasets = false;
  bool split_rhat = false;
  bool quiet = false;
};

int cmd_run(const RunFlags& f) {
  runner::RunConfig c;
  if (!f.config.empty()) c = runner::load_config(f.config);
  if (f.profile) c.apply_profile(*f.profile);
  if (f.scenarios) c.scenarios = *f.scenarios;
  if (f.models) {
    c.models.clear();
    if (*f.models != "all")
      for (auto& id : csv::split(*f.models)) c.models.push_back(id);
  }
  if (f.out) c.out = *f.out;
  if (f.preset) c.preset = *f.preset;
  if (f.replicates) c.replicates = *f.replicates;
  if (f.workers) c.workers = *f.workers;
  if (f.chains) c.chains.n_chains = *f.chains;
  if (f.burn_in) c.chains.burn_in = *f.burn_in;
  if (f.samples) c.chains.samples = *f.samples;
  if (f.seed) c.seed = *f.seed;
  if (f.resume) c.resume = true;
  if (f.dump_datasets) c.dump_datasets = true;
  if (f.split_rhat) c.chains.split_rhat = true;

  const auto s = runner::run(c, f.quiet ? nullptr : &std::cerr);
  std::cerr << fmt::format(
      "{} units ({} resumed), {} rows, {} failed, {} not estimable, {:.1f}s -> {}\n",
      s.units_total, s.units_resumed, s.rows, s.failed, s.not_estimable, s.seconds,
      c.out.string());
  return s.exit_code;
}

int cmd_aggregate(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot open " + in_path);
  const auto outcomes = metrics::read_outcomes_csv(in);
  const auto report = metrics::aggregate(outcomes, [](int sid) {
    return scenario::data_seed_id(scenario::scenario_grid().at(static_cast<std::size_t>(sid)));
  });
  if (out_path == "-") {
    metrics::write_metrics_csv(std::cout, report);
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    metrics::write_metrics_csv(out, report);
  }
  return runner::kSuccess;
}

int cmd_grid(const std::string& filter) {
  std::cout << "scenario_id,cv_between,cv_within,outlier,size,target_has_os\n";
  for (const auto& s : runner::select_scenarios(filter, "grid"))
    std::cout << fmt::format("{},{},{},{},{},{}\n", s.id, csv::format(s.cv_between),
                             csv::format(s.cv_within), scenario::to_string(s.outlier),
                             scenario::to_string(s.size), s.target_has_os ? 1 : 0);
  return runner::kSuccess;
}

int cmd_calibrate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const auto rows = msm::read_calibration_csv(in);
  std::vector<msm::IndicationValue> values;
  std::cout << "cancer_type,publication,lambda01,lambda12,delta\n";
  for (const auto& r : rows) {
    const auto c = msm::calibrate_from_medians(r);
    values.push_back({r.cancer_type, c.lambda01, c.delta});
    std::cout << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", r.cancer_type, r.publication,
                             c.lambda01, c.lambda12, c.delta);
  }
  const auto m = msm::aggregate_indication_means(values);
  std::cerr << fmt::format("mean lambda01 {:.5f}, mean delta {:.4f}\n", m.lambda01, m.delta);
  return runner::kSuccess;
}

int cmd_dataset(int scenario_id, int replicate, std::uint64_t seed, const std::string& preset) {
  const auto specs = runner::select_scenarios(std::to_string(scenario_id), preset);
  if (specs.empty()) throw ConfigError("no such scenario");
  runner::RunConfig c;
  c.seed = seed;
  scenario::write_dataset_csv(std::cout, runner::unit_dataset(specs.front(), replicate, c));
  return runner::kSuccess;
}

int cmd_estimand(double m, double lambda01, double delta) {
  msm::MsmParams p{lambda01, msm::kLambda02, delta, m};
  p.validate();
  msm::EstimandSpec spec;
  spec.followup = msm::solve_followup(p);
  const auto design = trial::design_study(p);
  std::cout << fmt::format("followup_months {:.6f}\nestimand {:.6f}\nlhr_pfs {:.6f}\nn_total {}\n",
                           spec.followup, msm::true_estimand(p, spec), msm::lhr_pfs(p),
                           design.n_total);
  return runner::kSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-indication synthesis simulation study"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Simulate datasets, fit models and write metrics");
  run->add_option("--config", rf.config, "JSON run configuration");
  run->add_option("--scenarios", rf.scenarios,
                  "ids, ranges and predicates, e.g. 0-9 or size=large,outlier=none");
  run->add_option("--models", rf.models, "comma-separated model ids or 'all'");
  run->add_option("--replicates", rf.replicates);
  run->add_option("--seed", rf.seed);
  run->add_option("--out", rf.out, "output directory");
  run->add_option("--workers", rf.workers);
  run->add_flag("--resume", rf.resume, "continue an interrupted run in --out");
  run->add_option("--chains", rf.chains);
  run->add_option("--burn-in", rf.burn_in);
  run->add_option("--samples", rf.samples, "retained draws per chain");
  run->add_option("--profile", rf.profile)->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--preset", rf.preset)->check(CLI::IsMember({"grid", "nuisance"}));
  run->add_flag("--dump-datasets", rf.dump_datasets);
  run->add_flag("--split-rhat", rf.split_rhat);
  run->add_flag("-q,--quiet", rf.quiet);

  std::string agg_in, agg_out = "-";
  auto* agg = app.add_subcommand("aggregate", "Recompute metrics.csv from outcomes.csv");
  agg->add_option("outcomes", agg_in)->required();
  agg->add_option("-o,--out", agg_out);

  std::string grid_filter = "all";
  auto* grid = app.add_subcommand("grid", "List scenarios");
  grid->add_option("--scenarios", grid_filter);

  std::string cal_path;
  auto* cal = app.add_subcommand("calibrate", "Calibrate lambda01 and delta from medians");
  cal->add_option("input", cal_path)->required();

  int ds_scenario = 0, ds_replicate = 0;
  std::uint64_t ds_seed = runner::RunConfig{}.seed;
  std::string ds_preset = "grid";
  auto* ds = app.add_subcommand("dataset", "Print one simulated dataset as CSV");
  ds->add_option("--scenario", ds_scenario)->required();
  ds->add_option("--replicate", ds_replicate);
  ds->add_option("--seed", ds_seed);
  ds->add_option("--preset", ds_preset)->check(CLI::IsMember({"grid", "nuisance"}));

  double est_m = msm::kMeanM, est_l01 = msm::kMeanLambda01, est_delta = msm::kMeanDelta;
  auto* est = app.add_subcommand("estimand", "Follow-up, estimand and sample size");
  est->add_option("--m", est_m);
  est->add_option("--lambda01", est_l01);
  est->add_option("--delta", est_delta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : runner::kConfigError;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*agg) return cmd_aggregate(agg_in, agg_out);
    if (*grid) return cmd_grid(grid_filter);
    if (*cal) return cmd_calibrate(cal_path);
    if (*ds) return cmd_dataset(ds_scenario, ds_replicate, ds_seed, ds_preset);
    if (*est) return cmd_estimand(est_m, est_l01, est_delta);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return runner::kConfigError;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return runner::kIoAbort;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return runner::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runner::kIoAbort;
  }
  return runner::kSuccess;
}
