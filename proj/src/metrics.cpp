#include "misim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "misim/csv.hpp"
#include "misim/error.hpp"
#include "misim/models.hpp"
#include "misim/stats.hpp"

namespace misim::metrics {

std::string to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::NotEstimable: return "not_estimable";
    case Status::Failed: return "failed";
  }
  return "?";
}

Status parse_status(const std::string& s) {
  if (s == "ok") return Status::Ok;
  if (s == "not_estimable") return Status::NotEstimable;
  if (s == "failed") return Status::Failed;
  throw IoError("unknown outcome status '" + s + "'");
}

namespace {

int model_rank(const std::string& id) {
  const auto& all = models::all_models();
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i].id() == id) return static_cast<int>(i);
  return static_cast<int>(all.size());
}

std::string clean(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; },
                  ';');
  return s;
}

}  // namespace

void sort_outcomes(std::vector<ReplicateOutcome>& outcomes) {
  std::stable_sort(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) {
    if (a.scenario_id != b.scenario_id) return a.scenario_id < b.scenario_id;
    if (a.replicate != b.replicate) return a.replicate < b.replicate;
    const int ra = model_rank(a.model_id), rb = model_rank(b.model_id);
    if (ra != rb) return ra < rb;
    return a.model_id < b.model_id;
  });
}

void write_outcome(std::ostream& out, const ReplicateOutcome& o) {
  const bool ok = o.status == Status::Ok;
  auto num = [&](double v) { return ok ? csv::format(v) : std::string(); };
  out << o.scenario_id << ',' << o.replicate << ',' << o.model_id << ',' << to_string(o.status)
      << ',' << num(o.mean) << ',' << num(o.sd) << ',' << num(o.q025) << ',' << num(o.q975) << ','
      << csv::format(o.truth) << ',' << (o.option1 ? 1 : 0) << ',' << (o.option2 ? 1 : 0) << ','
      << clean(o.message) << '\n';
}

void write_outcomes_csv(std::ostream& out, std::span<const ReplicateOutcome> outcomes) {
  out << kOutcomesHeader << '\n';
  for (const auto& o : outcomes) write_outcome(out, o);
}

ReplicateOutcome parse_outcome(const std::string& line) {
  const auto f = csv::split(line);
  if (f.size() != 12) throw IoError("outcome row has " + std::to_string(f.size()) + " fields");
  ReplicateOutcome o;
  o.scenario_id = static_cast<int>(csv::to_int(f[0]));
  o.replicate = static_cast<int>(csv::to_int(f[1]));
  o.model_id = f[2];
  o.status = parse_status(f[3]);
  if (o.status == Status::Ok) {
    o.mean = csv::to_double(f[4]);
    o.sd = csv::to_double(f[5]);
    o.q025 = csv::to_double(f[6]);
    o.q975 = csv::to_double(f[7]);
  }
  o.truth = f[8].empty() ? std::nan("") : csv::to_double(f[8]);
  o.option1 = f[9] == "1";
  o.option2 = f[10] == "1";
  o.message = f[11];
  return o;
}

std::vector<ReplicateOutcome> read_outcomes_csv(std::istream& in) {
  std::vector<ReplicateOutcome> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kOutcomesHeader) throw IoError("unexpected outcomes header: " + line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    out.push_back(parse_outcome(line));
  }
  return out;
}

Estimate bias(std::span<const ReplicateOutcome> used) {
  if (used.size() < 2) return {};
  std::vector<double> err;
  err.reserve(used.size());
  for (const auto& o : used) err.push_back(o.mean - o.truth);
  // Population SD of the errors: {+0.1, -0.1} has MCSE 0.1 / sqrt(2).
  const double n = static_cast<double>(err.size());
  const double sd = stats::sd(err) * std::sqrt((n - 1.0) / n);
  return {stats::mean(err), sd / std::sqrt(n)};
}

Estimate coverage(std::span<const ReplicateOutcome> used) {
  if (used.empty()) return {};
  std::size_t hit = 0;
  for (const auto& o : used)
    if (o.q025 <= o.truth && o.truth <= o.q975) ++hit;
  const double n = static_cast<double>(used.size());
  const double p = static_cast<double>(hit) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

Estimate empirical_se(std::span<const ReplicateOutcome> used) {
  if (used.size() < 2) return {};
  std::vector<double> m;
  m.reserve(used.size());
  for (const auto& o : used) m.push_back(o.mean);
  const double se = stats::sd(m);
  return {se, se / std::sqrt(2.0 * static_cast<double>(m.size() - 1))};
}

SplitEstimate splitting_se_ratio(std::span<const ReplicateOutcome> used,
                                 std::span<const ReplicateOutcome> reference) {
  std::map<int, double> ref;
  for (const auto& r : reference) ref[r.replicate] = r.sd;
  std::vector<double> ratios;
  for (const auto& o : used) {
    const auto it = ref.find(o.replicate);
    if (it == ref.end() || !(it->second > 0.0)) continue;
    ratios.push_back(o.sd / it->second);
  }
  SplitEstimate s;
  s.n_pairs = static_cast<int>(ratios.size());
  if (ratios.empty()) return s;
  s.estimate.value = stats::mean(ratios);
  if (ratios.size() >= 2)
    s.estimate.mcse = stats::sd(ratios) / std::sqrt(static_cast<double>(ratios.size()));
  return s;
}

const MetricRow* MetricsReport::find(int scenario_id, const std::string& model_id,
                                     const std::string& metric) const {
  for (const auto& r : rows)
    if (r.scenario_id == scenario_id && r.model_id == model_id && r.metric == metric) return &r;
  return nullptr;
}

MetricsReport aggregate(std::span<const ReplicateOutcome> outcomes,
                        int (*reference_scenario)(int scenario_id)) {
  std::vector<ReplicateOutcome> sorted(outcomes.begin(), outcomes.end());
  sort_outcomes(sorted);

  std::map<int, std::vector<ReplicateOutcome>> ip_reference;
  for (const auto& o : sorted)
    if (o.model_id == "ip_tau" && o.usable()) ip_reference[o.scenario_id].push_back(o);

  // Group in (scenario, model rank) order.
  std::map<std::pair<int, int>, std::vector<const ReplicateOutcome*>> groups;
  for (const auto& o : sorted) groups[{o.scenario_id, model_rank(o.model_id)}].push_back(&o);

  MetricsReport report;
  for (const auto& [key, members] : groups) {
    const int sid = key.first;
    const std::string& model_id = members.front()->model_id;
    GroupCounts c;
    std::vector<ReplicateOutcome> used;
    for (const auto* o : members) {
      if (o->status == Status::NotEstimable) {
        ++c.n_not_estimable;
      } else if (o->usable()) {
        used.push_back(*o);
      } else {
        ++c.n_dropped;
      }
    }
    c.n_used = static_cast<int>(used.size());
    report.counts[{sid, model_id}] = c;
    if (c.n_used == 0 && c.n_dropped == 0) continue;  // never estimable here

    auto add = [&](const char* metric, Estimate e, int n_used) {
      report.rows.push_back({sid, model_id, metric, e, n_used, c.n_dropped});
    };
    add("bias", bias(used), c.n_used);
    add("coverage", coverage(used), c.n_used);
    add("empirical_se", empirical_se(used), c.n_used);
    const int ref_sid = reference_scenario ? reference_scenario(sid) : sid;
    const auto it = ip_reference.find(ref_sid);
    const auto split = it == ip_reference.end()
                           ? SplitEstimate{}
                           : splitting_se_ratio(used, it->second);
    add("split_se", split.estimate, split.n_pairs);
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << kMetricsHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.scenario_id << ',' << r.model_id << ',' << r.metric << ','
        << csv::format(r.estimate.value) << ',' << csv::format(r.estimate.mcse) << ','
        << r.n_used << ',' << r.n_dropped << '\n';
  }
}

}  // namespace misim::metrics
