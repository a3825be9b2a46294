#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "misim/error.hpp"
#include "misim/stats.hpp"
#include "misim/scenario.hpp"

using namespace misim;
using namespace misim::scenario;
using doctest::Approx;

namespace {

ScenarioSpec find_spec(double cv_b, double cv_w, OutlierMode o, EvidenceSize s, bool os) {
  for (const auto& spec : scenario_grid())
    if (spec.cv_between == cv_b && spec.cv_within == cv_w && spec.outlier == o &&
        spec.size == s && spec.target_has_os == os)
      return spec;
  throw std::logic_error("no such scenario");
}

StreamKey key_for(const ScenarioSpec& s, int replicate) {
  return {3, static_cast<std::uint64_t>(data_seed_id(s)), static_cast<std::uint64_t>(replicate)};
}

}  // namespace

TEST_CASE("coefficient of variation mapping") {
  CHECK(sigma_from_cv(0.0) == 0.0);
  CHECK(sigma_from_cv(0.15) == Approx(0.0766).epsilon(1e-3));
  const double s = sigma_from_cv(0.5);
  CHECK(s == Approx(0.2554).epsilon(1e-3));
  CHECK(1.0 - stats::normal_cdf(-std::log(0.6) / s) == Approx(0.0228).epsilon(0.01));
  CHECK_THROWS((void)sigma_from_cv(-0.1));
}

TEST_CASE("evidence shapes") {
  CHECK(EvidenceShape::of(EvidenceSize::Small).n_studies() == 7);
  CHECK(EvidenceShape::of(EvidenceSize::Medium).n_studies() == 17);
  CHECK(EvidenceShape::of(EvidenceSize::Large).n_studies() == 31);
  CHECK(EvidenceShape::of(EvidenceSize::Large).n_indications() == 8);
  CHECK(EvidenceShape::of(EvidenceSize::Small).outlier_indication() == 1);
  CHECK(EvidenceShape::of(EvidenceSize::Medium).outlier_indication() == 1);  // first of two 3s
  CHECK(EvidenceShape::of(EvidenceSize::Large).outlier_indication() == 1);
}

TEST_CASE("scenario grid") {
  const auto grid = scenario_grid();
  REQUIRE(grid.size() == 600);
  std::set<std::tuple<double, double, int, int, bool>> unique;
  int small = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& s = grid[i];
    CHECK(s.id == static_cast<int>(i));
    unique.insert({s.cv_between, s.cv_within, static_cast<int>(s.outlier),
                   static_cast<int>(s.size), s.target_has_os});
    if (s.size == EvidenceSize::Small) ++small;
    CHECK(!s.nuisance_cv);
    // Twin scenarios differ only in target OS.
    const auto& twin = grid[i ^ 1u];
    CHECK(twin.target_has_os != s.target_has_os);
    CHECK(twin.cv_between == s.cv_between);
    CHECK(twin.size == s.size);
    CHECK(data_seed_id(s) == (s.target_has_os ? s.id : s.id - 1));
  }
  CHECK(unique.size() == 600);
  CHECK(small == 200);
}

TEST_CASE("effects without heterogeneity are exactly the mean") {
  const auto spec = find_spec(0.0, 0.0, OutlierMode::None, EvidenceSize::Large, true);
  Rng rng = seed_for(1, 0, 0, StreamRole::Effects);
  const auto e = sample_effects(spec, EvidenceShape::of(spec.size), rng);
  for (double m : e.m_j) CHECK(m == Approx(0.6).epsilon(1e-15));
  for (const auto& row : e.m_ji)
    for (double m : row) CHECK(m == Approx(0.6).epsilon(1e-15));
}

TEST_CASE("outlier overrides") {
  const auto shape = EvidenceShape::of(EvidenceSize::Large);
  auto spec = find_spec(0.5, 0.07, OutlierMode::ExtremeNonTarget, EvidenceSize::Large, true);
  Rng rng = seed_for(1, 0, 0, StreamRole::Effects);
  auto e = sample_effects(spec, shape, rng);
  REQUIRE(e.outlier == 1);
  CHECK(e.m_j[1] == Approx(std::exp(std::log(0.6) + 6.0 * sigma_from_cv(0.5))));
  CHECK(e.m_j[1] == Approx(2.78).epsilon(0.005));
  CHECK(!e.degenerate_outlier);

  spec = find_spec(0.3, 0.0, OutlierMode::ModerateNonTarget, EvidenceSize::Large, true);
  e = sample_effects(spec, shape, rng);
  CHECK(e.m_j[1] == Approx(std::exp(std::log(0.6) + 1.96 * sigma_from_cv(0.3))));

  spec = find_spec(0.3, 0.15, OutlierMode::ModerateTarget, EvidenceSize::Large, true);
  e = sample_effects(spec, shape, rng);
  CHECK(e.outlier == shape.target());
  CHECK(e.m_j[shape.target()] == Approx(std::exp(std::log(0.6) + 1.96 * sigma_from_cv(0.3))));
  CHECK(e.m_ji[shape.target()][0] != Approx(e.m_j[shape.target()]));  // within-indication draw

  spec = find_spec(0.0, 0.0, OutlierMode::ExtremeNonTarget, EvidenceSize::Small, true);
  e = sample_effects(spec, EvidenceShape::of(EvidenceSize::Small), rng);
  CHECK(e.degenerate_outlier);
  CHECK(e.m_j[1] == Approx(0.6));
}

TEST_CASE("between-indication spread matches the CV") {
  const auto spec = find_spec(0.3, 0.0, OutlierMode::None, EvidenceSize::Small, true);
  const auto shape = EvidenceShape::of(spec.size);
  std::vector<double> logs;
  for (int r = 0; r < 10000; ++r) {
    Rng rng = seed_for(9, 0, static_cast<std::uint64_t>(r), StreamRole::Effects);
    logs.push_back(std::log(sample_effects(spec, shape, rng).m_j[0]));
  }
  CHECK(stats::sd(logs) == Approx(0.1532).epsilon(0.03));
}

TEST_CASE("dataset shapes and target OS withholding") {
  const auto small = find_spec(0.15, 0.07, OutlierMode::None, EvidenceSize::Small, true);
  const auto d = build_dataset(small, key_for(small, 0));
  CHECK(d.studies.size() == 7);
  for (const auto& s : d.studies) CHECK(s.result.lhr_os.has_value());
  CHECK(d.studies.back().is_target);
  CHECK(d.target() == 3);

  const auto large = find_spec(0.15, 0.07, OutlierMode::None, EvidenceSize::Large, false);
  const auto l = build_dataset(large, key_for(large, 0));
  int with_os = 0, pfs_only = 0;
  for (const auto& s : l.studies) {
    if (s.result.lhr_os) {
      ++with_os;
      CHECK(!s.is_target);
    } else {
      ++pfs_only;
      CHECK(s.is_target);
    }
    CHECK(s.result.se_pfs > 0.0);
  }
  CHECK(with_os == 30);
  CHECK(pfs_only == 1);
}

TEST_CASE("twin scenarios share data apart from target OS") {
  const auto with = find_spec(0.3, 0.15, OutlierMode::None, EvidenceSize::Medium, true);
  const auto without = scenario_grid()[static_cast<std::size_t>(with.id + 1)];
  const auto a = build_dataset(with, key_for(with, 4));
  const auto b = build_dataset(without, key_for(without, 4));
  REQUIRE(a.studies.size() == b.studies.size());
  for (std::size_t i = 0; i < a.studies.size(); ++i) {
    CHECK(a.studies[i].result.lhr_pfs == b.studies[i].result.lhr_pfs);
    if (!a.studies[i].is_target) CHECK(*a.studies[i].result.lhr_os == *b.studies[i].result.lhr_os);
  }
  CHECK(a.truth == b.truth);
}

TEST_CASE("datasets are a pure function of spec and seed") {
  const auto spec = find_spec(0.5, 0.3, OutlierMode::ModerateNonTarget, EvidenceSize::Medium, true);
  const auto a = build_dataset(spec, key_for(spec, 2));
  const auto b = build_dataset(spec, key_for(spec, 2));
  const auto c = build_dataset(spec, key_for(spec, 3));
  std::ostringstream sa, sb, sc;
  write_dataset_csv(sa, a);
  write_dataset_csv(sb, b);
  write_dataset_csv(sc, c);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() != sc.str());
}

TEST_CASE("truth is the estimand of the target indication") {
  const auto spec = find_spec(0.3, 0.15, OutlierMode::None, EvidenceSize::Small, true);
  const auto d = build_dataset(spec, key_for(spec, 1));
  const auto& p = d.indication_params[static_cast<std::size_t>(d.target())];
  CHECK(p.m == Approx(d.m_j[static_cast<std::size_t>(d.target())]));
  msm::EstimandSpec e;
  e.followup = msm::solve_followup(p);
  CHECK(d.truth == Approx(msm::true_estimand(p, e)).epsilon(1e-14));
  for (const auto& q : d.indication_params) {
    CHECK(q.lambda01 == msm::kMeanLambda01);
    CHECK(q.delta == msm::kMeanDelta);
    CHECK(q.lambda02 == msm::kLambda02);
  }
}

TEST_CASE("no heterogeneity gives one truth for every replicate") {
  const auto spec = find_spec(0.0, 0.0, OutlierMode::None, EvidenceSize::Small, true);
  const double t0 = build_dataset(spec, key_for(spec, 0)).truth;
  for (int r = 1; r < 4; ++r) CHECK(build_dataset(spec, key_for(spec, r)).truth == t0);
}

TEST_CASE("within-indication effects are equal when cv_w is zero") {
  const auto spec = find_spec(0.3, 0.0, OutlierMode::None, EvidenceSize::Large, true);
  const auto d = build_dataset(spec, key_for(spec, 0));
  for (const auto& s : d.studies)
    CHECK(s.true_m_ji == Approx(d.m_j[static_cast<std::size_t>(s.result.indication)]));
}

TEST_CASE("nuisance heterogeneity preset") {
  const auto spec = find_spec(0.3, 0.07, OutlierMode::ModerateTarget, EvidenceSize::Small, true);
  const auto fig4 = with_nuisance_heterogeneity(spec);
  REQUIRE(fig4.nuisance_cv.has_value());
  CHECK(*fig4.nuisance_cv == 0.3);
  CHECK(!with_nuisance_heterogeneity(find_spec(0.3, 0.07, OutlierMode::None, EvidenceSize::Small, true))
             .nuisance_cv);
  const auto d = build_dataset(fig4, key_for(fig4, 0));
  std::set<double> l01;
  for (const auto& p : d.indication_params) {
    l01.insert(p.lambda01);
    CHECK(p.delta >= 1.0);
  }
  CHECK(l01.size() == d.indication_params.size());
}

TEST_CASE("dataset CSV layout") {
  const auto spec = find_spec(0.0, 0.0, OutlierMode::None, EvidenceSize::Small, false);
  const auto d = build_dataset(spec, key_for(spec, 0));
  std::ostringstream os;
  write_dataset_csv(os, d);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "scenario_id,replicate,indication,study,is_target,lhr_pfs,se_pfs,lhr_os,se_os,"
        "true_m_j,truth_estimand");
  int rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 7);
  CHECK(last.find(",,") != std::string::npos);  // target OS cells empty
}

TEST_CASE("names round-trip") {
  for (auto o : {OutlierMode::None, OutlierMode::ModerateNonTarget, OutlierMode::ExtremeNonTarget,
                 OutlierMode::ModerateTarget})
    CHECK(parse_outlier(to_string(o)) == o);
  for (auto s : {EvidenceSize::Small, EvidenceSize::Medium, EvidenceSize::Large})
    CHECK(parse_size(to_string(s)) == s);
  CHECK_THROWS_AS((void)parse_size("huge"), ConfigError);
}
