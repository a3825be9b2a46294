// Property-based acceptance on desk-scale simulation runs (100 replicates,
// desk chain profile). Runs are persisted under <run-dir> and resumed while
// the simulation library is byte-identical; pass --fresh to discard them.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <stdexcept>
#include <map>
#include <string>
#include <vector>

#include "misim/metrics.hpp"
#include "misim/runner.hpp"
#include "misim/scenario.hpp"
#include "report.hpp"

using namespace misim;
using acceptance::Report;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  std::vector<scenario::ScenarioSpec> cells;
  metrics::MetricsReport report;
};

struct Value {
  double v = std::nan("");
  double mcse = std::nan("");
  [[nodiscard]] bool ok() const { return std::isfinite(v); }
};

Value get(const RunResult& r, int sid, const std::string& model, const std::string& metric) {
  const auto* row = r.report.find(sid, model, metric);
  if (!row || !row->estimate.value) return {};
  return {*row->estimate.value, row->estimate.mcse.value_or(std::nan(""))};
}

std::string cell_name(const scenario::ScenarioSpec& s) {
  return fmt::format("#{} cv_b={} cv_w={} {} {}", s.id, s.cv_between, s.cv_within,
                     scenario::to_string(s.outlier), scenario::to_string(s.size));
}

class Runs {
 public:
  explicit Runs(fs::path root) : root_(std::move(root)) {}

  RunResult run(const std::string& name, const std::string& scenarios,
                std::vector<std::string> models) {
    runner::RunConfig c;  // desk profile, 100 replicates
    c.scenarios = scenarios;
    c.models = std::move(models);
    c.out = root_ / name;
    c.resume = fs::exists(c.out / "config.json");
    const auto s = runner::run(c);
    Report::note(fmt::format("run {}: {} units ({} resumed), {} failed fits, {:.0f}s", name,
                             s.units_total, s.units_resumed, s.failed, s.seconds));
    std::ifstream in(c.out / "outcomes.csv");
    const auto outcomes = metrics::read_outcomes_csv(in);
    return {runner::select_scenarios(scenarios, "grid"), metrics::aggregate(outcomes, nullptr)};
  }

 private:
  fs::path root_;
};

void prepare(const fs::path& root, const fs::path& library, bool fresh) {
  std::ifstream lib(library, std::ios::binary);
  if (!lib) throw std::runtime_error("cannot read " + library.string());
  const std::string bytes((std::istreambuf_iterator<char>(lib)), std::istreambuf_iterator<char>());
  const auto stamp = fmt::format("{:016x}", std::hash<std::string>{}(bytes));
  std::string previous;
  if (std::ifstream in(root / "stamp"); in) std::getline(in, previous);
  if (fresh || previous != stamp) fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "stamp") << stamp << '\n';
}

const std::vector<std::string> kUnivariate{"ip_tau", "ip_tauj", "cp_tau",
                                           "cp_tauj", "rp_tau", "rp_tauj"};

void section_41(Report& r, Runs& runs) {
  const auto none = runs.run("none_large", "size=large,outlier=none,target_os=1", kUnivariate);
  const auto extreme = runs.run("extreme_large_high",
                                "size=large,outlier=extreme,target_os=1,cv_b=0.3|0.5",
                                {"ip_tau", "cp_tau", "rp_tau", "mcip_tau"});
  r.restart_clock();

  // (a) every univariate model nearly unbiased without outliers.
  int a_ok = 0, a_total = 0;
  double worst = 0.0;
  for (const auto& s : none.cells)
    for (const auto& m : kUnivariate) {
      const auto b = get(none, s.id, m, "bias");
      ++a_total;
      if (b.ok() && std::abs(b.v) < 0.02) {
        ++a_ok;
      } else {
        Report::note(fmt::format("(a) {} {}: bias {:.4f} (mcse {:.4f})", cell_name(s), m, b.v,
                                 b.mcse));
      }
      if (b.ok()) worst = std::max(worst, std::abs(b.v));
    }
  const bool a = a_ok == a_total;

  // (b) CP coverage under low between-indication heterogeneity.
  int b_ok = 0, b_total = 0;
  for (const auto& s : none.cells) {
    if (s.cv_between > 0.07) continue;
    for (const char* m : {"cp_tau", "cp_tauj"}) {
      const auto c = get(none, s.id, m, "coverage");
      ++b_total;
      if (c.ok() && c.v >= 0.90 && c.v <= 0.99) {
        ++b_ok;
      } else {
        Report::note(fmt::format("(b) {} {}: coverage {:.3f}", cell_name(s), m, c.v));
      }
    }
  }
  const bool b = b_ok == b_total;

  // (c) borrowing strength: mean splitting ratio CP < RP < 1.
  auto mean_split = [&](const std::string& m) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : none.cells)
      if (const auto v = get(none, s.id, m, "split_se"); v.ok()) {
        sum += v.v;
        ++n;
      }
    return n ? sum / n : std::nan("");
  };
  const double cp_t = mean_split("cp_tau"), rp_t = mean_split("rp_tau");
  const double cp_j = mean_split("cp_tauj"), rp_j = mean_split("rp_tauj");
  const bool c = cp_t < rp_t && rp_t < 1.0 && cp_j < rp_j && rp_j < 1.0;
  Report::note(fmt::format("(c) mean splitting ratio: cp_tau {:.3f} rp_tau {:.3f}; cp_tauj {:.3f} "
                           "rp_tauj {:.3f}",
                           cp_t, rp_t, cp_j, rp_j));

  // (d) extreme non-target outlier with CV_b >= 30%.
  int d_ok = 0;
  for (const auto& s : extreme.cells) {
    const auto ip = get(extreme, s.id, "ip_tau", "bias");
    const auto cp = get(extreme, s.id, "cp_tau", "bias");
    const auto rp = get(extreme, s.id, "rp_tau", "bias");
    const bool ok = ip.ok() && cp.ok() && rp.ok() && std::abs(ip.v) < 0.02 && cp.v > 0.0 &&
                    cp.v > 3 * cp.mcse && std::abs(rp.v) < cp.v;
    d_ok += ok;
    Report::note(fmt::format("(d) {}: ip {:.4f}, cp {:.4f} (mcse {:.4f}), rp {:.4f} {}",
                             cell_name(s), ip.v, cp.v, cp.mcse, rp.v, ok ? "ok" : "FAIL"));
  }
  const bool d = d_ok == static_cast<int>(extreme.cells.size());

  r.criterion(7, "qualitative univariate behaviour", a && b && c && d,
              fmt::format("(a) |bias| < 0.02 in {}/{} model-cells (worst {:.4f}); (b) CP coverage "
                          "in [0.90, 0.99] in {}/{}; (c) CP < RP < 1 {}; (d) {}/{} cells",
                          a_ok, a_total, worst, b_ok, b_total, c ? "holds" : "fails", d_ok,
                          extreme.cells.size()));
}

void section_43(Report& r, Runs& runs) {
  const std::vector<std::string> bi{"bicp_um_tau", "bicp_um_tauj", "birp_um_tau", "birp_um_tauj"};
  std::vector<std::string> models{"rp_tau"};
  models.insert(models.end(), bi.begin(), bi.end());
  const auto run =
      runs.run("target_large", "size=large,outlier=target,target_os=1,cv_b=0.3|0.5,cv_w=0.07",
               models);
  r.restart_clock();
  int ok_cells = 0;
  for (const auto& s : run.cells) {
    const auto rp = get(run, s.id, "rp_tau", "bias");
    bool ok = rp.ok() && std::abs(rp.v) > 3 * rp.mcse;
    std::string line = fmt::format("{}: rp_tau {:.4f} (mcse {:.4f})", cell_name(s), rp.v, rp.mcse);
    for (const auto& m : bi) {
      const auto b = get(run, s.id, m, "bias");
      ok = ok && b.ok() && std::abs(b.v) < 0.03;
      line += fmt::format(", {} {:.4f}", m, b.v);
    }
    ok_cells += ok;
    Report::note(line + (ok ? " ok" : " FAIL"));
  }
  r.criterion(8, "bivariate behaviour", ok_cells == static_cast<int>(run.cells.size()),
              fmt::format("RP_tau biased and unmatched Bi-CP/Bi-RP |bias| < 0.03 in {}/{} "
                          "target-outlier cells",
                          ok_cells, run.cells.size()));
}

void section_42(Report& r, Runs& runs) {
  const auto moderate = runs.run("moderate_large", "size=large,outlier=moderate,target_os=1",
                                 {"cp_tau", "rp_tau", "mcip_tau", "mrip_tau"});
  const auto ext_low = runs.run("extreme_large_low",
                                "size=large,outlier=extreme,target_os=1,cv_b=0|0.07|0.15",
                                {"cp_tau", "mcip_tau"});
  const auto ext_high = runs.run("extreme_large_high",
                                 "size=large,outlier=extreme,target_os=1,cv_b=0.3|0.5",
                                 {"ip_tau", "cp_tau", "rp_tau", "mcip_tau"});
  const auto ext_medium =
      runs.run("extreme_medium", "size=medium,outlier=extreme,target_os=1", {"cp_tau", "mcip_tau"});
  const auto ext_small =
      runs.run("extreme_small", "size=small,outlier=extreme,target_os=1", {"cp_tau", "mcip_tau"});
  r.restart_clock();

  // MRIP tracks RP under moderate outliers.
  int mr_ok = 0;
  double mr_worst = 0.0;
  for (const auto& s : moderate.cells) {
    const auto mr = get(moderate, s.id, "mrip_tau", "bias");
    const auto rp = get(moderate, s.id, "rp_tau", "bias");
    const double diff = std::abs(mr.v - rp.v);
    if (mr.ok() && rp.ok() && diff <= 0.01) {
      ++mr_ok;
    } else {
      Report::note(fmt::format("{}: mrip_tau {:.4f} vs rp_tau {:.4f}", cell_name(s), mr.v, rp.v));
    }
    if (std::isfinite(diff)) mr_worst = std::max(mr_worst, diff);
  }

  // MCIP vs CP by configuration group (outlier, size, CV_b), pooled over
  // CV_w: improvement = mean(|bias CP| - |bias MCIP|) > 2 MCSE.
  struct Group {
    double sum = 0.0, var = 0.0;
    int n = 0;
  };
  std::map<std::string, Group> groups;
  std::map<std::string, bool> expected;
  auto collect = [&](const RunResult& run) {
    for (const auto& s : run.cells) {
      const auto cp = get(run, s.id, "cp_tau", "bias");
      const auto mc = get(run, s.id, "mcip_tau", "bias");
      if (!cp.ok() || !mc.ok()) continue;
      const auto key = fmt::format("{} {} cv_b={}", scenario::to_string(s.outlier),
                                   scenario::to_string(s.size), s.cv_between);
      auto& g = groups[key];
      g.sum += std::abs(cp.v) - std::abs(mc.v);
      g.var += cp.mcse * cp.mcse + mc.mcse * mc.mcse;
      ++g.n;
      expected[key] = s.outlier == scenario::OutlierMode::ExtremeNonTarget &&
                      s.cv_between >= 0.3 && s.size != scenario::EvidenceSize::Small;
    }
  };
  for (const auto* run : {&moderate, &ext_low, &ext_high, &ext_medium, &ext_small}) collect(*run);
  int mc_ok = 0;
  for (const auto& [key, g] : groups) {
    const double gain = g.sum / g.n, mcse = std::sqrt(g.var) / g.n;
    const bool improves = gain > 2 * mcse;
    const bool ok = improves == expected[key];
    mc_ok += ok;
    Report::note(fmt::format("MCIP vs CP, {}: |bias| reduction {:.4f} (mcse {:.4f}), {} {}", key,
                             gain, mcse, improves ? "improves" : "no improvement",
                             ok ? "as expected" : "UNEXPECTED"));
  }
  r.criterion(9, "mixture behaviour",
              mr_ok == static_cast<int>(moderate.cells.size()) &&
                  mc_ok == static_cast<int>(groups.size()),
              fmt::format("|MRIP_tau - RP_tau bias| <= 0.01 in {}/{} moderate cells (worst "
                          "{:.4f}); MCIP improvement pattern as expected in {}/{} groups",
                          mr_ok, moderate.cells.size(), mr_worst, mc_ok, groups.size()));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance_qualitative <run-dir> <libmisim> [--fresh]\n");
    return 2;
  }
  const fs::path root = argv[1];
  prepare(root, argv[2], argc > 3 && std::string(argv[3]) == "--fresh");
  Runs runs(root);
  Report r;
  section_41(r, runs);
  section_43(r, runs);
  section_42(r, runs);
  return r.exit_code();
}
