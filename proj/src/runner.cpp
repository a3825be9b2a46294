#include "misim/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "misim/csv.hpp"
#include "misim/error.hpp"

namespace misim::runner {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::apply_profile(const std::string& name) {
  if (name == "desk") {
    chains = mcmc::ChainConfig::desk();
  } else if (name == "paper") {
    chains = mcmc::ChainConfig::paper();
  } else {
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
  }
  profile = name;
}

void RunConfig::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (preset != "grid" && preset != "nuisance")
    throw ConfigError("unknown preset '" + preset + "' (expected grid or nuisance)");
  if (!(priors.location_sd > 0.0) || !(priors.scale_sd > 0.0) || !(priors.psi_scale > 0.0))
    throw ConfigError("prior scales must be positive");
  try {
    chains.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (select_scenarios(scenarios, preset).empty())
    throw ConfigError("scenario filter '" + scenarios + "' selects nothing");
  (void)select_models(models);
}

void RunConfig::merge_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{
      "seed",    "replicates", "scenarios", "models",        "profile", "chains", "burn_in",
      "samples", "thin",       "split_rhat", "init_spread", "priors",  "preset", "max_attempts",
      "out",     "workers",    "resume",     "dump_datasets"};
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  try {
    if (j.contains("profile")) apply_profile(j.at("profile").get<std::string>());
    if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("replicates")) replicates = j.at("replicates").get<int>();
    if (j.contains("scenarios")) {
      const auto& s = j.at("scenarios");
      if (s.is_array()) {
        std::string joined;
        for (const auto& x : s) {
          if (!joined.empty()) joined += ',';
          joined += x.is_string() ? x.get<std::string>() : std::to_string(x.get<int>());
        }
        scenarios = joined;
      } else {
        scenarios = s.get<std::string>();
      }
    }
    if (j.contains("models")) {
      const auto& m = j.at("models");
      models = m.is_string() ? std::vector<std::string>{m.get<std::string>()}
                             : m.get<std::vector<std::string>>();
      if (models.size() == 1 && models[0] == "all") models.clear();
    }
    if (j.contains("chains")) chains.n_chains = j.at("chains").get<int>();
    if (j.contains("burn_in")) chains.burn_in = j.at("burn_in").get<int>();
    if (j.contains("samples")) chains.samples = j.at("samples").get<int>();
    if (j.contains("thin")) chains.thin = j.at("thin").get<int>();
    if (j.contains("split_rhat")) chains.split_rhat = j.at("split_rhat").get<bool>();
    if (j.contains("init_spread")) chains.init_spread = j.at("init_spread").get<double>();
    if (j.contains("priors")) {
      const auto& p = j.at("priors");
      if (p.contains("location_sd")) priors.location_sd = p.at("location_sd").get<double>();
      if (p.contains("scale_sd")) priors.scale_sd = p.at("scale_sd").get<double>();
      if (p.contains("psi_scale")) priors.psi_scale = p.at("psi_scale").get<double>();
    }
    if (j.contains("preset")) preset = j.at("preset").get<std::string>();
    if (j.contains("max_attempts")) max_attempts = j.at("max_attempts").get<int>();
    if (j.contains("out")) out = j.at("out").get<std::string>();
    if (j.contains("workers")) workers = j.at("workers").get<int>();
    if (j.contains("resume")) resume = j.at("resume").get<bool>();
    if (j.contains("dump_datasets")) dump_datasets = j.at("dump_datasets").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

json RunConfig::to_json() const {
  return json{{"seed", seed},
              {"replicates", replicates},
              {"scenarios", scenarios},
              {"models", models.empty() ? std::vector<std::string>{"all"} : models},
              {"profile", profile},
              {"chains", chains.n_chains},
              {"burn_in", chains.burn_in},
              {"samples", chains.samples},
              {"thin", chains.thin},
              {"split_rhat", chains.split_rhat},
              {"init_spread", chains.init_spread},
              {"priors",
               {{"location_sd", priors.location_sd},
                {"scale_sd", priors.scale_sd},
                {"psi_scale", priors.psi_scale}}},
              {"preset", preset},
              {"max_attempts", max_attempts},
              {"dump_datasets", dump_datasets}};
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  RunConfig c;
  try {
    c.merge_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return c;
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool matches_value(const scenario::ScenarioSpec& s, const std::string& key,
                   const std::string& value) {
  auto near = [](double a, double b) { return std::abs(a - b) < 1e-9; };
  try {
    if (key == "cv_b") return near(s.cv_between, csv::to_double(value));
    if (key == "cv_w") return near(s.cv_within, csv::to_double(value));
    if (key == "outlier") return s.outlier == scenario::parse_outlier(value);
    if (key == "size") return s.size == scenario::parse_size(value);
    if (key == "target_os") return s.target_has_os == (csv::to_int(value) != 0);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + value + "' for scenario key '" + key + "'");
  }
  throw ConfigError("unknown scenario key '" + key + "'");
}

}  // namespace

std::vector<scenario::ScenarioSpec> select_scenarios(const std::string& filter,
                                                     const std::string& preset) {
  auto grid = scenario::scenario_grid();
  std::set<int> ids;
  std::vector<std::pair<std::string, std::vector<std::string>>> predicates;
  if (filter != "all" && !filter.empty()) {
    for (const auto& term : split_on(filter, ',')) {
      if (term.empty()) continue;
      if (const auto eq = term.find('='); eq != std::string::npos) {
        predicates.emplace_back(term.substr(0, eq), split_on(term.substr(eq + 1), '|'));
        continue;
      }
      try {
        const auto dash = term.find('-', 1);
        const int lo = static_cast<int>(csv::to_int(term.substr(0, dash)));
        const int hi =
            dash == std::string::npos ? lo : static_cast<int>(csv::to_int(term.substr(dash + 1)));
        if (lo < 0 || hi >= static_cast<int>(grid.size()) || lo > hi) throw ConfigError("");
        for (int i = lo; i <= hi; ++i) ids.insert(i);
      } catch (const std::exception&) {
        throw ConfigError("bad scenario selector '" + term + "'");
      }
    }
  }
  std::vector<scenario::ScenarioSpec> out;
  for (const auto& s : grid) {
    if (!ids.empty() && !ids.contains(s.id)) continue;
    const bool ok = std::all_of(predicates.begin(), predicates.end(), [&](const auto& p) {
      return std::any_of(p.second.begin(), p.second.end(),
                         [&](const std::string& v) { return matches_value(s, p.first, v); });
    });
    if (!ok) continue;
    out.push_back(preset == "nuisance" ? scenario::with_nuisance_heterogeneity(s) : s);
  }
  return out;
}

std::vector<models::ModelSpec> select_models(const std::vector<std::string>& ids) {
  if (ids.empty()) return models::all_models();
  std::vector<models::ModelSpec> out;
  for (const auto& m : models::all_models())
    if (std::find(ids.begin(), ids.end(), m.id()) != ids.end()) out.push_back(m);
  for (const auto& id : ids) (void)models::ModelSpec::parse(id);  // reject unknown ids
  return out;
}

scenario::MultiIndicationDataset unit_dataset(const scenario::ScenarioSpec& spec, int replicate,
                                              const RunConfig& config) {
  scenario::BuildOptions options;
  options.max_attempts = config.max_attempts;
  const StreamKey key{config.seed, static_cast<std::uint64_t>(scenario::data_seed_id(spec)),
                      static_cast<std::uint64_t>(replicate)};
  auto d = scenario::build_dataset(spec, key, options);
  d.scenario_id = spec.id;
  return d;
}

std::vector<metrics::ReplicateOutcome> run_unit(const scenario::ScenarioSpec& spec, int replicate,
                                                const RunConfig& config,
                                                const std::vector<models::ModelSpec>& selected,
                                                scenario::MultiIndicationDataset* dataset_out) {
  using metrics::ReplicateOutcome;
  using metrics::Status;
  std::vector<ReplicateOutcome> rows;
  auto base = [&](const models::ModelSpec& m) {
    ReplicateOutcome o;
    o.scenario_id = spec.id;
    o.replicate = replicate;
    o.model_id = m.id();
    return o;
  };

  scenario::MultiIndicationDataset data;
  try {
    data = unit_dataset(spec, replicate, config);
  } catch (const Error& e) {
    for (const auto& m : selected) {
      auto o = base(m);
      o.status = Status::Failed;
      o.truth = std::nan("");
      o.message = std::string("dataset: ") + e.what();
      rows.push_back(o);
    }
    return rows;
  }

  models::FitCache cache(data, config.chains,
                         StreamKey{config.seed, static_cast<std::uint64_t>(spec.id),
                                   static_cast<std::uint64_t>(replicate)},
                         config.priors);
  for (const auto& m : selected) {
    auto o = base(m);
    o.truth = data.truth;
    try {
      const auto p = models::predict_target(m, cache);
      o.mean = p.mean;
      o.sd = p.sd;
      o.q025 = p.q025;
      o.q975 = p.q975;
      o.option1 = p.option1;
      o.option2 = p.option2;
    } catch (const NotEstimable& e) {
      o.status = Status::NotEstimable;
      o.message = e.what();
    } catch (const std::exception& e) {
      o.status = Status::Failed;
      o.message = e.what();
    }
    rows.push_back(std::move(o));
  }
  if (dataset_out) *dataset_out = std::move(data);
  return rows;
}

namespace {

constexpr const char* kDoneMarker = "#done";

struct Unit {
  const scenario::ScenarioSpec* spec;
  int replicate;
};

std::string timestamp() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

// Completed units and their rows from an interrupted run. Rows after the
// last done-marker belong to an unfinished unit and are discarded.
std::map<std::pair<int, int>, std::vector<metrics::ReplicateOutcome>> read_journal(
    const fs::path& path) {
  std::map<std::pair<int, int>, std::vector<metrics::ReplicateOutcome>> done;
  std::ifstream in(path);
  if (!in) return done;
  std::vector<metrics::ReplicateOutcome> pending;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind(kDoneMarker, 0) == 0) {
      const auto f = csv::split(line);
      if (f.size() != 3) break;
      const std::pair<int, int> key{static_cast<int>(csv::to_int(f[1])),
                                    static_cast<int>(csv::to_int(f[2]))};
      std::vector<metrics::ReplicateOutcome> rows;
      for (auto& o : pending)
        if (o.scenario_id == key.first && o.replicate == key.second) rows.push_back(o);
      done[key] = std::move(rows);
      std::erase_if(pending, [&](const auto& o) {
        return o.scenario_id == key.first && o.replicate == key.second;
      });
      continue;
    }
    try {
      pending.push_back(metrics::parse_outcome(line));
    } catch (const std::exception&) {
      break;  // torn final write
    }
  }
  return done;
}

}  // namespace

RunSummary run(const RunConfig& config, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = timestamp();
  config.validate();
  const auto scenarios = select_scenarios(config.scenarios, config.preset);
  const auto selected = select_models(config.models);

  std::error_code ec;
  fs::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create " + config.out.string() + ": " + ec.message());
  if (config.dump_datasets) {
    fs::create_directories(config.out / "datasets", ec);
    if (ec) throw IoError("cannot create datasets directory: " + ec.message());
  }

  const fs::path journal_path = config.out / "journal.csv";
  const fs::path snapshot_path = config.out / "config.json";
  const json snapshot = config.to_json();
  std::map<std::pair<int, int>, std::vector<metrics::ReplicateOutcome>> done;
  if (config.resume && fs::exists(snapshot_path)) {
    std::ifstream in(snapshot_path);
    json previous;
    try {
      previous = json::parse(in);
    } catch (const json::parse_error&) {
      throw IoError("unreadable " + snapshot_path.string());
    }
    if (previous != snapshot)
      throw ConfigError("resume: configuration differs from the interrupted run");
    done = read_journal(journal_path);
  } else {
    write_file(snapshot_path, snapshot.dump(2) + "\n");
    std::ofstream(journal_path, std::ios::trunc);
  }

  std::vector<Unit> pending;
  RunSummary summary;
  for (const auto& s : scenarios)
    for (int r = 0; r < config.replicates; ++r) {
      ++summary.units_total;
      if (done.contains({s.id, r})) {
        ++summary.units_resumed;
      } else {
        pending.push_back({&s, r});
      }
    }
  // Rewrite the journal with only completed units so torn tails never
  // precede new entries.
  {
    std::ostringstream os;
    for (const auto& [key, rows] : done) {
      for (const auto& o : rows) metrics::write_outcome(os, o);
      os << kDoneMarker << ',' << key.first << ',' << key.second << '\n';
    }
    write_file(journal_path, os.str());
  }

  std::ofstream journal(journal_path, std::ios::app);
  if (!journal) throw IoError("cannot open " + journal_path.string());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr io_error;
  auto& results = done;

  auto work = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const Unit u = pending[i];
      const auto ut = std::chrono::steady_clock::now();
      scenario::MultiIndicationDataset data;
      auto rows = run_unit(*u.spec, u.replicate, config, selected,
                           config.dump_datasets ? &data : nullptr);
      std::string dump;
      if (config.dump_datasets && !data.studies.empty()) {
        std::ostringstream os;
        scenario::write_dataset_csv(os, data);
        dump = os.str();
      }
      std::lock_guard lock(mu);
      try {
        if (!dump.empty())
          write_file(config.out / "datasets" /
                         fmt::format("s{:03}_r{:04}.csv", u.spec->id, u.replicate),
                     dump);
        for (const auto& o : rows) metrics::write_outcome(journal, o);
        journal << kDoneMarker << ',' << u.spec->id << ',' << u.replicate << '\n';
        if (!journal.flush()) throw IoError("journal write failed");
      } catch (...) {
        io_error = std::current_exception();
        abort = true;
        return;
      }
      ++summary.units_run;
      if (log) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - ut).count();
        *log << fmt::format("[{}/{}] scenario {} replicate {} ({:.1f}s)\n",
                            summary.units_resumed + summary.units_run, summary.units_total,
                            u.spec->id, u.replicate, secs)
             << std::flush;
      }
      results[{u.spec->id, u.replicate}] = std::move(rows);
    }
  };

  const int n_workers = std::min<int>(config.workers, static_cast<int>(pending.size()));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }
  if (io_error) std::rethrow_exception(io_error);

  std::vector<metrics::ReplicateOutcome> outcomes;
  for (const auto& [key, rows] : results)
    outcomes.insert(outcomes.end(), rows.begin(), rows.end());
  metrics::sort_outcomes(outcomes);

  json units = json::array();
  for (const auto& [key, rows] : results) {
    json status = json::object();
    for (const auto& o : rows) status[o.model_id] = metrics::to_string(o.status);
    units.push_back({{"scenario", key.first}, {"replicate", key.second}, {"models", status}});
  }
  for (const auto& o : outcomes) {
    if (o.status == metrics::Status::Failed) ++summary.failed;
    if (o.status == metrics::Status::NotEstimable) ++summary.not_estimable;
  }
  summary.rows = static_cast<int>(outcomes.size());

  std::ostringstream oc;
  metrics::write_outcomes_csv(oc, outcomes);
  write_file(config.out / "outcomes.csv", oc.str());

  const auto report = metrics::aggregate(outcomes, [](int sid) {
    return scenario::data_seed_id(scenario::scenario_grid().at(static_cast<std::size_t>(sid)));
  });
  std::ostringstream mc;
  metrics::write_metrics_csv(mc, report);
  write_file(config.out / "metrics.csv", mc.str());

  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary.exit_code = summary.failed > 0 ? kPartialFailure : kSuccess;
  const json manifest{{"version", kVersion},
                      {"config", snapshot},
                      {"models", [&] {
                         std::vector<std::string> ids;
                         for (const auto& m : selected) ids.push_back(m.id());
                         return ids;
                       }()},
                      {"units", units},
                      {"summary",
                       {{"units_total", summary.units_total},
                        {"units_run", summary.units_run},
                        {"units_resumed", summary.units_resumed},
                        {"rows", summary.rows},
                        {"failed", summary.failed},
                        {"not_estimable", summary.not_estimable}}},
                      {"wall_clock",
                       {{"started", started},
                        {"finished", timestamp()},
                        {"seconds", summary.seconds},
                        {"workers", config.workers}}}};
  write_file(config.out / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace misim::runner
