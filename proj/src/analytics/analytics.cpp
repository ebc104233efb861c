#include "healthprism/analytics/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "healthprism/dataio/preprocess.hpp"
#include "healthprism/dataio/schema.hpp"

namespace healthprism::analytics {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double r = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::optional<Spearman> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::argument, "spearman: columns differ in length");
  const std::size_t n = x.size();
  if (n < 3) fail(ErrorCode::argument, "spearman needs at least 3 observations");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Spearman out;
  out.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
  if (std::abs(out.rho) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double df = static_cast<double>(n - 2);
    const double t = out.rho * std::sqrt(df / (1.0 - out.rho * out.rho));
    const boost::math::students_t dist(df);
    out.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
  }
  return out;
}

CorrelationMatrix spearman_matrix(const std::vector<std::string>& names,
                                  const std::vector<std::vector<double>>& columns) {
  if (names.size() != columns.size()) fail(ErrorCode::argument, "one name per column required");
  const std::size_t m = columns.size();
  CorrelationMatrix out;
  out.features = names;
  out.cells.resize(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      CorrelationCell cell{i, j, std::nullopt, std::nullopt};
      if (const auto s = spearman(columns[i], columns[j])) {
        cell.rho = i == j ? 1.0 : s->rho;
        cell.p_value = i == j ? 0.0 : s->p_value;
      }
      out.cells[i * m + j] = cell;
      out.cells[j * m + i] = CorrelationCell{j, i, cell.rho, cell.p_value};
    }
  }
  return out;
}

CorrelationMatrix spearman_matrix(const dataio::Dataset& dataset, const std::vector<std::string>& feature_ids) {
  std::vector<std::vector<double>> columns;
  for (const auto& id : feature_ids) {
    const auto f = dataset.schema.find(id);
    if (!f) fail(ErrorCode::not_found, "unknown feature '" + id + "'");
    if (dataset.schema[*f].kind != dataio::FeatureKind::numeric) {
      fail(ErrorCode::type, "feature '" + id + "' is not numeric");
    }
    std::vector<double> col;
    col.reserve(dataset.participants.size());
    for (const auto& p : dataset.participants) col.push_back(std::get<double>(p.completed.at(*f)));
    columns.push_back(std::move(col));
  }
  return spearman_matrix(feature_ids, columns);
}

nlohmann::json CorrelationMatrix::to_json() const {
  nlohmann::json rho = nlohmann::json::array();
  nlohmann::json p = nlohmann::json::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    nlohmann::json rrow = nlohmann::json::array();
    nlohmann::json prow = nlohmann::json::array();
    for (std::size_t j = 0; j < features.size(); ++j) {
      rrow.push_back(optional_number(at(i, j).rho));
      prow.push_back(optional_number(at(i, j).p_value));
    }
    rho.push_back(std::move(rrow));
    p.push_back(std::move(prow));
  }
  return {{"features", features}, {"rho", rho}, {"p_value", p}};
}

std::vector<PairEntry> top_pairs(const CorrelationMatrix& matrix, std::size_t n,
                                 std::span<const std::pair<std::size_t, std::size_t>> pins) {
  const std::size_t m = matrix.features.size();
  std::vector<PairEntry> out;
  std::vector<std::uint8_t> taken(m * m, 0);
  for (auto [i, j] : pins) {
    if (i >= m || j >= m || i == j) {
      fail(ErrorCode::argument, "pinned pair " + std::to_string(i) + ":" + std::to_string(j) + " is not a feature pair");
    }
    if (i > j) std::swap(i, j);
    if (taken[i * m + j]) continue;
    taken[i * m + j] = 1;
    const auto& c = matrix.at(i, j);
    out.push_back({i, j, c.rho.value_or(std::nan("")), c.p_value.value_or(std::nan("")), true});
  }
  std::vector<PairEntry> ranked;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& c = matrix.at(i, j);
      if (taken[i * m + j] || !c.rho) continue;
      ranked.push_back({i, j, *c.rho, *c.p_value, false});
    }
  }
  // Already in (i, j) order, so a stable sort keeps the tie rule.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const PairEntry& a, const PairEntry& b) { return std::abs(a.rho) > std::abs(b.rho); });
  ranked.resize(std::min(ranked.size(), n));
  out.insert(out.end(), ranked.begin(), ranked.end());
  return out;
}

double profile_score(std::span<const double> values) {
  const std::size_t k = values.size();
  if (k == 0) fail(ErrorCode::argument, "profile score needs at least one indicator");
  if (k > kIndicatorCount) fail(ErrorCode::argument, "profile score takes at most six indicators");
  if (k == 1) return values[0];
  if (k == 2) return (values[0] + values[1]) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += values[i] * values[(i + 1) % k];
  return 0.5 * sum * std::sin(2.0 * std::numbers::pi / static_cast<double>(k));
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return dataio::minmax_scale(scores, *lo, *hi);
}

Divisions divide_3sigma(std::span<const double> scores) {
  Divisions out;
  out.division.assign(scores.size(), 1);
  if (scores.empty()) return out;
  const double n = static_cast<double>(scores.size());
  out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : scores) ss += (s - out.mean) * (s - out.mean);
  out.sd = std::sqrt(ss / n);
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const bool flat = *lo == *hi;
  if (flat) out.sd = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    int d = 1;
    if (!flat && s < out.mean) {
      if (s >= out.mean - out.sd) {
        d = 2;
      } else if (s >= out.mean - 2.0 * out.sd) {
        d = 3;
      } else if (s >= out.mean - 3.0 * out.sd) {
        d = 4;
      } else {
        d = 5;
      }
    }
    out.division[i] = d;
    ++out.counts[static_cast<std::size_t>(d - 1)];
  }
  return out;
}

std::vector<std::vector<std::size_t>> nearest_neighbors(const std::vector<std::string>& ids,
                                                        const std::vector<std::vector<double>>& profiles,
                                                        std::size_t k) {
  const std::size_t n = ids.size();
  if (profiles.size() != n) fail(ErrorCode::argument, "one profile per id required");
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (profiles[j].size() != profiles[i].size()) fail(ErrorCode::shape, "profiles differ in length");
      double d2 = 0.0;
      for (std::size_t c = 0; c < profiles[i].size(); ++c) {
        const double diff = profiles[i][c] - profiles[j][c];
        d2 += diff * diff;
      }
      cand.emplace_back(std::sqrt(d2), j);
    }
    const std::size_t keep = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(keep), cand.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return ids[a.second] < ids[b.second];
    });
    for (std::size_t r = 0; r < keep; ++r) out[i].push_back(cand[r].second);
  }
  return out;
}

ProfileGraph build_similarity_graph(const std::vector<std::string>& ids,
                                    const std::vector<std::vector<double>>& profiles, std::size_t k) {
  ProfileGraph g;
  const auto nn = nearest_neighbors(ids, profiles, k);
  std::vector<double> areas;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    GraphNode node;
    node.id = ids[i];
    node.profile = profiles[i];
    node.raw_area = profile_score(profiles[i]);
    areas.push_back(node.raw_area);
    g.nodes.push_back(std::move(node));
  }
  const auto scores = normalize_scores(areas);
  const auto div = divide_3sigma(scores);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    g.nodes[i].score = scores[i];
    g.nodes[i].division = div.division[i];
  }
  g.division_counts = div.counts;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    for (auto j : nn[i]) {
      const std::size_t a = std::min(i, j), b = std::max(i, j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < profiles[a].size(); ++c) {
        d2 += (profiles[a][c] - profiles[b][c]) * (profiles[a][c] - profiles[b][c]);
      }
      g.edges.push_back({a, b, std::sqrt(d2)});
    }
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const GraphEdge& x, const GraphEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end(),
                            [](const GraphEdge& x, const GraphEdge& y) { return x.a == y.a && x.b == y.b; }),
                g.edges.end());
  return g;
}

nlohmann::json ProfileGraph::to_json() const {
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& n : nodes) {
    ns.push_back({{"id", n.id},
                  {"profile", n.profile},
                  {"raw_area", n.raw_area},
                  {"score", n.score},
                  {"division", n.division}});
  }
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : edges) {
    es.push_back({{"source", nodes[e.a].id}, {"target", nodes[e.b].id}, {"distance", e.distance}});
  }
  return {{"nodes", ns}, {"edges", es}, {"division_counts", division_counts}};
}

void GroupFilter::validate() const {
  if (indicators.empty()) fail(ErrorCode::argument, "indicators must be nonempty");
}

bool GroupFilter::admits(const dataio::Participant& p) const {
  const bool g = genders.empty() || std::find(genders.begin(), genders.end(), p.gender) != genders.end();
  const bool a = age_groups.empty() || std::find(age_groups.begin(), age_groups.end(), p.age_group) != age_groups.end();
  return g && a;
}

std::vector<std::size_t> select(const dataio::Dataset& dataset, const GroupFilter& filter) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.participants.size(); ++i) {
    if (filter.admits(dataset.participants[i])) out.push_back(i);
  }
  return out;
}

std::vector<SankeyFlow> sankey_aggregate(std::span<const dataio::Participant* const> participants) {
  std::array<std::array<std::size_t, 3>, 2> counts{};
  for (const auto* p : participants) {
    ++counts[static_cast<std::size_t>(p->gender)][static_cast<std::size_t>(p->learning_mode)];
  }
  std::vector<SankeyFlow> out;
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t m = 0; m < 3; ++m) {
      if (counts[g][m] == 0) continue;
      out.push_back({std::string(dataio::to_string(static_cast<dataio::Gender>(g))),
                     std::string(dataio::to_string(static_cast<dataio::LearningMode>(m))), counts[g][m]});
    }
  }
  return out;
}

MotionSummary motion_summary(std::span<const dataio::Participant* const> participants, std::size_t window,
                             std::size_t from, std::size_t to) {
  if (window < 5 || window > 120 || window % 5 != 0) {
    fail(ErrorCode::argument, "window must be one of 5, 10, ..., 120 (got " + std::to_string(window) + ")");
  }
  if (from >= to || to > kWeekMinutes) {
    fail(ErrorCode::argument, "range [" + std::to_string(from) + ", " + std::to_string(to) +
                                  ") must be a nonempty part of [0, 10080)");
  }
  if (participants.empty()) fail(ErrorCode::argument, "motion summary needs at least one participant");
  MotionSummary out{window, from, to, {}, {}, {}};
  const double n = static_cast<double>(participants.size());
  for (std::size_t a = 0; a < kMotionAxes; ++a) {
    std::vector<double> mean(to - from, 0.0);
    for (const auto* p : participants) {
      const auto axis = p->motion.axis(a);
      for (std::size_t t = from; t < to; ++t) mean[t - from] += axis[t];
    }
    for (auto& v : mean) v /= n;
    for (std::size_t s = from; s < to; s += window) {
      const std::size_t e = std::min(to, s + window);
      double sum = 0.0;
      for (std::size_t t = s; t < e; ++t) sum += mean[t - from];
      out.axes[a].push_back(sum / static_cast<double>(e - s));
    }
  }
  for (std::size_t s = from; s < to; s += window) out.bucket_start.push_back(s);
  for (std::size_t b = 0; b < out.bucket_start.size(); ++b) {
    double sq = 0.0;
    for (std::size_t a = 0; a < kMotionAxes; ++a) sq += out.axes[a][b] * out.axes[a][b];
    out.magnitude.push_back(std::sqrt(sq));
  }
  return out;
}

nlohmann::json MotionSummary::to_json() const {
  return {{"window", window},
          {"from", from},
          {"to", to},
          {"bucket_start", bucket_start},
          {"x", axes[0]},
          {"y", axes[1]},
          {"z", axes[2]},
          {"magnitude", magnitude}};
}

double scaled_feature(const dataio::Dataset& dataset, const dataio::Participant& p, std::size_t feature) {
  const auto& desc = dataset.schema[feature];
  if (desc.kind == dataio::FeatureKind::numeric) {
    return p.context.values.at(dataset.schema.encoded_offset()[feature]);
  }
  const auto& cat = std::get<std::string>(p.completed.at(feature));
  const auto it = std::find(desc.categories.begin(), desc.categories.end(), cat);
  return static_cast<double>(it - desc.categories.begin()) / static_cast<double>(desc.categories.size() - 1);
}

ContextSummary group_context_summary(const dataio::Dataset& dataset, const std::vector<std::string>& feature_ids,
                                     std::span<const std::size_t> members,
                                     const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups) {
  if (feature_ids.empty()) fail(ErrorCode::argument, "features must be nonempty");
  std::vector<std::size_t> idx;
  for (const auto& id : feature_ids) {
    const auto f = dataset.schema.find(id);
    if (!f) fail(ErrorCode::not_found, "unknown feature '" + id + "'");
    idx.push_back(*f);
  }
  ContextSummary out;
  out.features = feature_ids;
  auto row_of = [&](std::size_t i) {
    std::vector<double> row;
    for (auto f : idx) row.push_back(scaled_feature(dataset, dataset.participants.at(i), f));
    return row;
  };
  for (auto i : members) {
    out.ids.push_back(dataset.participants.at(i).id);
    out.values.push_back(row_of(i));
  }
  auto mean_of = [&](const std::string& name, std::span<const std::size_t> group) {
    ContextSeries s{name, std::vector<double>(idx.size(), 0.0)};
    for (auto i : group) {
      const auto row = row_of(i);
      for (std::size_t f = 0; f < row.size(); ++f) s.means[f] += row[f];
    }
    if (!group.empty()) {
      for (auto& v : s.means) v /= static_cast<double>(group.size());
    }
    return s;
  };
  for (const auto& [name, group] : groups) out.groups.push_back(mean_of(name, group));
  std::vector<std::size_t> everyone(dataset.participants.size());
  std::iota(everyone.begin(), everyone.end(), 0);
  out.groups.push_back(mean_of("all", everyone));
  return out;
}

nlohmann::json ContextSummary::to_json() const {
  nlohmann::json ps = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) ps.push_back({{"id", ids[i]}, {"values", values[i]}});
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : groups) gs.push_back({{"name", g.name}, {"means", g.means}});
  return {{"features", features}, {"participants", ps}, {"groups", gs}};
}

}  // namespace healthprism::analytics
