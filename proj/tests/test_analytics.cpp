#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "healthprism/analytics/analytics.hpp"
#include "support.hpp"

using namespace healthprism;
using namespace healthprism::analytics;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

std::vector<double> naive_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("average ranks") {
  const std::vector<double> x{3, 1, 3, 2};
  CHECK(average_ranks(x) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("spearman against naive rank-then-Pearson") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0, 1);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 10 + rng() % 90;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(g(rng) * 3.0);  // ties
      y[i] = 0.5 * x[i] + g(rng);
    }
    const auto s = spearman(x, y);
    REQUIRE(s.has_value());
    CHECK(std::abs(s->rho - naive_pearson(naive_ranks(x), naive_ranks(y))) <= 1e-12);
    CHECK(s->p_value >= 0.0);
    CHECK(s->p_value <= 1.0);
    // monotone transforms keep rho
    std::vector<double> ex(n);
    for (std::size_t i = 0; i < n; ++i) ex[i] = std::exp(x[i]) * 5.0 + 1.0;
    CHECK(spearman(ex, y)->rho == s->rho);
  }
  const std::vector<double> c{1, 1, 1, 1};
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(!spearman(c, v).has_value());
  const auto perfect = spearman(v, v);
  CHECK(perfect->rho == 1.0);
  CHECK(perfect->p_value == 0.0);
}

TEST_CASE("spearman p-value from Student's t") {
  // Two-sided p = 1 - 2 * integral_0^|t| of the t density, by Simpson's rule.
  auto oracle = [](double t, double nu) {
    const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * std::numbers::pi);
    auto f = [&](double x) { return c * std::pow(1 + x * x / nu, -(nu + 1) / 2); };
    const int steps = 20000;
    const double h = std::abs(t) / steps;
    double sum = f(0) + f(std::abs(t));
    for (int i = 1; i < steps; ++i) sum += (i % 2 ? 4 : 2) * f(i * h);
    return 1.0 - 2.0 * sum * h / 3.0;
  };
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 10 + rng() % 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = 0.3 * x[i] + g(rng);
    }
    const auto s = spearman(x, y);
    const double nu = static_cast<double>(n) - 2.0;
    const double t = s->rho * std::sqrt(nu / (1.0 - s->rho * s->rho));
    CHECK(s->p_value == doctest::Approx(oracle(t, nu)).epsilon(1e-8));
  }
}

TEST_CASE("spearman matrix") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  std::vector<std::vector<double>> cols(4, std::vector<double>(30));
  for (auto& c : cols) {
    for (auto& v : c) v = g(rng);
  }
  cols[3].assign(30, 2.0);
  const auto m = spearman_matrix({"a", "b", "c", "d"}, cols);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m.at(i, i).rho == 1.0);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(m.at(i, j).rho == m.at(j, i).rho);
      CHECK(m.at(i, j).p_value == m.at(j, i).p_value);
    }
  }
  CHECK(!m.at(0, 3).rho.has_value());
  const auto mj = m.to_json();
  CHECK(mj["rho"].size() == 4);
  CHECK(mj["rho"][0][3].is_null());

  const auto pins = std::vector<std::pair<std::size_t, std::size_t>>{{2, 1}, {1, 2}};
  const auto top = top_pairs(m, 2, pins);
  REQUIRE(top.size() == 3);
  CHECK(top[0].pinned);
  CHECK(!top[1].pinned);
  for (const auto& p : top) CHECK(p.j != 3);
  CHECK(std::abs(top[1].rho) >= std::abs(top[2].rho));

  const auto& c = hp_test::tiny_cohort();
  const auto dm = spearman_matrix(c.dataset, {"age", "bmi", "sleep_weekday"});
  CHECK(dm.features.size() == 3);
  CHECK(dm.at(0, 1).rho == dm.at(1, 0).rho);
}

TEST_CASE("profile score") {
  CHECK(profile_score(std::vector<double>{0.4}) == 0.4);
  CHECK(profile_score(std::vector<double>{0.4, 0.8}) == doctest::Approx(0.6).epsilon(1e-15));
  for (double r : {0.1, 0.5, 0.9, 1.0}) {
    const std::vector<double> v(6, r);
    CHECK(std::abs(profile_score(v) - 3.0 * r * r * std::sin(std::numbers::pi / 3.0)) <= 1e-12);
  }
  std::vector<double> v{0.1, 0.7, 0.3, 0.9, 0.5};
  const double base = profile_score(v);
  std::rotate(v.begin(), v.begin() + 2, v.end());
  CHECK(profile_score(v) == doctest::Approx(base).epsilon(1e-14));
  for (auto& x : v) x *= 0.5;
  CHECK(profile_score(v) == doctest::Approx(base * 0.25).epsilon(1e-14));
  CHECK(code_of([] { profile_score(std::vector<double>{}); }) == ErrorCode::argument);
}

TEST_CASE("normalize_scores keeps order") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 3);
  std::vector<double> s(200);
  for (auto& v : s) v = u(rng);
  const auto n = normalize_scores(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); j += 7) {
      if (s[i] < s[j]) CHECK(n[i] <= n[j]);
    }
  }
  CHECK(*std::min_element(n.begin(), n.end()) == 0.0);
  CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
  CHECK(normalize_scores(std::vector<double>{2, 2}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("3-sigma divisions on Gaussian scores") {
  std::mt19937_64 rng(1000);
  std::normal_distribution<double> g(0.5, 0.1);
  std::vector<double> s(1000);
  for (auto& v : s) v = g(rng);
  const auto d = divide_3sigma(s);
  const std::array<double, 5> expected{50, 34, 13.6, 2.1, 0.1};
  std::size_t total = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(static_cast<double>(d.counts[k]) / 10.0 - expected[k]) <= 3.0);
    total += d.counts[k];
  }
  CHECK(total == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(d.division[i] == (s[i] >= d.mean ? 1 : d.division[i]));
    if (d.division[i] == 2) CHECK(s[i] >= d.mean - d.sd);
  }
  const auto flat = divide_3sigma(std::vector<double>{0.3, 0.3, 0.3});
  CHECK(flat.counts[0] == 3);
}

TEST_CASE("kNN graph matches brute force") {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0, 1);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> profiles;
    for (int i = 0; i < 50; ++i) {
      ids.push_back("N" + std::to_string(100 + (i * 37) % 50));
      std::vector<double> p(6);
      for (auto& v : p) v = u(rng);
      profiles.push_back(p);
    }
    const auto nn = nearest_neighbors(ids, profiles, 10);
    const auto graph = build_similarity_graph(ids, profiles, 10);
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : graph.edges) {
      CHECK(e.a < e.b);
      edges.insert({e.a, e.b});
    }
    CHECK(edges.size() == graph.edges.size());
    CHECK(std::is_sorted(graph.edges.begin(), graph.edges.end(),
                         [](const GraphEdge& x, const GraphEdge& y) { return std::pair(x.a, x.b) < std::pair(y.a, y.b); }));
    for (std::size_t i = 0; i < 50; ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < 50; ++j) {
        if (j == i) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) s += (profiles[i][c] - profiles[j][c]) * (profiles[i][c] - profiles[j][c]);
        d.emplace_back(s, j);
      }
      std::sort(d.begin(), d.end());
      std::set<std::size_t> oracle, got(nn[i].begin(), nn[i].end());
      for (std::size_t r = 0; r < 10; ++r) oracle.insert(d[r].second);
      CHECK(got == oracle);
      std::size_t degree = 0;
      for (const auto& e : graph.edges) degree += (e.a == i || e.b == i);
      CHECK(degree >= 10);
      for (auto j : oracle) CHECK(edges.count({std::min(i, j), std::max(i, j)}) == 1);
    }
    std::size_t nodes = 0;
    for (auto c : graph.division_counts) nodes += c;
    CHECK(nodes == 50);
  }
  // ties go to the smaller id
  const auto tie = nearest_neighbors({"b", "a", "c"}, {{0.0}, {1.0}, {-1.0}}, 1);
  CHECK(tie[0] == std::vector<std::size_t>{1});
  const auto small = build_similarity_graph({"x", "y", "z"}, {{0.1}, {0.2}, {0.3}}, 10);
  CHECK(small.edges.size() == 3);
}

TEST_CASE("group filters and summaries") {
  const auto& c = hp_test::tiny_cohort();
  const auto& ds = c.dataset;
  GroupFilter f;
  CHECK(code_of([&] { f.validate(); }) == ErrorCode::argument);
  f.indicators = {Indicator::MVPA};
  f.genders = {dataio::Gender::female};
  const auto fem = select(ds, f);
  std::size_t count = 0;
  for (const auto& p : ds.participants) count += p.gender == dataio::Gender::female;
  CHECK(fem.size() == count);

  std::vector<const dataio::Participant*> ptrs;
  for (const auto& p : ds.participants) ptrs.push_back(&p);
  const auto flows = sankey_aggregate(ptrs);
  std::size_t female_flow = 0, total = 0;
  for (const auto& fl : flows) {
    CHECK(fl.count > 0);
    total += fl.count;
    if (fl.source == "female") female_flow += fl.count;
  }
  CHECK(total == ds.participants.size());
  CHECK(female_flow == count);

  const std::vector<const dataio::Participant*> two{ptrs[0], ptrs[1]};
  const auto ms = motion_summary(two, 60, 0, 150);
  REQUIRE(ms.bucket_start == std::vector<std::size_t>{0, 60, 120});
  double sum = 0.0;
  for (std::size_t t = 120; t < 150; ++t) sum += (ptrs[0]->motion.values[t] + ptrs[1]->motion.values[t]) / 2.0;
  CHECK(ms.axes[0][2] == doctest::Approx(sum / 30.0).epsilon(1e-12));
  CHECK(ms.magnitude.size() == 3);

  const std::vector<std::size_t> solo{4};
  const auto cs = group_context_summary(ds, {"age", "gender", "sleep_quality"}, solo, {{"me", solo}});
  REQUIRE(cs.groups.size() == 2);
  CHECK(cs.groups[1].name == "all");
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(cs.groups[0].means[k] == cs.values[0][k]);
    CHECK(cs.values[0][k] == scaled_feature(ds, ds.participants[4], ds.schema.index(cs.features[k])));
  }
  const std::vector<std::size_t> all_idx = [&] {
    std::vector<std::size_t> v(ds.participants.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }();
  const auto both = group_context_summary(ds, {"age"}, solo, {{"a", all_idx}, {"b", all_idx}});
  CHECK(both.groups[0].means == both.groups[1].means);
  double age_mean = 0.0;
  for (const auto& p : ds.participants) age_mean += scaled_feature(ds, p, ds.schema.index("age"));
  CHECK(both.groups[2].means[0] == doctest::Approx(age_mean / static_cast<double>(ds.participants.size())).epsilon(1e-12));
}
