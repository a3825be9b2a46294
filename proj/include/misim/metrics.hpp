#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Frequentist performance of target predictions across replicates.
namespace misim::metrics {

enum class Status { Ok, NotEstimable, Failed };

[[nodiscard]] std::string to_string(Status s);
[[nodiscard]] Status parse_status(const std::string& s);

struct ReplicateOutcome {
  int scenario_id = 0;
  int replicate = 0;
  std::string model_id;
  Status status = Status::Ok;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double truth = 0.0;
  bool option1 = false;
  bool option2 = false;
  std::string message;  // failure reason, never contains commas or newlines

  [[nodiscard]] bool usable() const { return status == Status::Ok && option2; }
  friend bool operator==(const ReplicateOutcome&, const ReplicateOutcome&) = default;
};

// Sort key: (scenario_id, replicate, model order in all_models()).
void sort_outcomes(std::vector<ReplicateOutcome>& outcomes);

inline constexpr const char* kOutcomesHeader =
    "scenario_id,replicate,model_id,status,mean,sd,q025,q975,truth,option1,option2,message";

void write_outcome(std::ostream& out, const ReplicateOutcome& o);
void write_outcomes_csv(std::ostream& out, std::span<const ReplicateOutcome> outcomes);
[[nodiscard]] ReplicateOutcome parse_outcome(const std::string& line);
[[nodiscard]] std::vector<ReplicateOutcome> read_outcomes_csv(std::istream& in);

struct Estimate {
  std::optional<double> value;
  std::optional<double> mcse;
};

// Each takes the usable outcomes of one (scenario, model).
[[nodiscard]] Estimate bias(std::span<const ReplicateOutcome> used);
[[nodiscard]] Estimate coverage(std::span<const ReplicateOutcome> used);
[[nodiscard]] Estimate empirical_se(std::span<const ReplicateOutcome> used);
// Mean of per-replicate sd ratios over replicates present in both inputs.
// `reference` holds usable IP_tau outcomes of the with-OS twin scenario.
struct SplitEstimate {
  Estimate estimate;
  int n_pairs = 0;
};
[[nodiscard]] SplitEstimate splitting_se_ratio(std::span<const ReplicateOutcome> used,
                                               std::span<const ReplicateOutcome> reference);

struct MetricRow {
  int scenario_id = 0;
  std::string model_id;
  std::string metric;  // bias, coverage, empirical_se, split_se
  Estimate estimate;
  int n_used = 0;
  int n_dropped = 0;
};

struct GroupCounts {
  int n_used = 0;
  int n_dropped = 0;        // failed fits and Option 2 failures
  int n_not_estimable = 0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::map<std::pair<int, std::string>, GroupCounts> counts;

  [[nodiscard]] const MetricRow* find(int scenario_id, const std::string& model_id,
                                      const std::string& metric) const;
};

// Groups by (scenario, model) in outcome sort order. `reference_scenario`
// maps a scenario to the scenario whose ip_tau rows serve as the splitting
// reference.
[[nodiscard]] MetricsReport aggregate(std::span<const ReplicateOutcome> outcomes,
                                      int (*reference_scenario)(int scenario_id));

inline constexpr const char* kMetricsHeader =
    "scenario_id,model_id,metric,value,mcse,n_used,n_dropped";

void write_metrics_csv(std::ostream& out, const MetricsReport& report);

}  // namespace misim::metrics
