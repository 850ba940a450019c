#include <numeric>
#include <random>

#include "doctest.h"
#include "codecforge/analysis.hpp"
#include "codecforge/errors.hpp"
#include "codecforge/metrics.hpp"
#include "codecforge/model.hpp"
#include "codecforge/supervision.hpp"

using namespace codecforge;

namespace {

struct Points {
  std::vector<std::size_t> pred, truth;
};

// Expands counts into an explicit shuffled point list.
Points expand(const std::vector<std::vector<std::size_t>>& counts, std::mt19937_64& rng) {
  Points p;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (std::size_t q = 0; q < counts[g].size(); ++q) {
      for (std::size_t k = 0; k < counts[g][q]; ++k) {
        p.truth.push_back(g);
        p.pred.push_back(q);
      }
    }
  }
  std::vector<std::size_t> order(p.pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Points out;
  for (std::size_t i : order) {
    out.pred.push_back(p.pred[i]);
    out.truth.push_back(p.truth[i]);
  }
  return out;
}

ConfusionMatrix from_counts(const std::vector<std::vector<std::size_t>>& counts) {
  std::mt19937_64 rng(0);
  const Points p = expand(counts, rng);
  ConfusionMatrix cm(counts.size());
  cm.accumulate(p.pred, p.truth);
  return cm;
}

}  // namespace

TEST_CASE("accumulate") {
  ConfusionMatrix cm(3);
  cm.accumulate(std::vector<std::size_t>{}, std::vector<std::size_t>{});
  CHECK(cm.total() == 0);
  const std::vector<std::size_t> a{0, 1, 2, 2, 1};
  cm.accumulate(a, a);
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t p = 0; p < 3; ++p) CHECK(cm.count(g, p) == (g == p ? std::count(a.begin(), a.end(), g) : 0));
  }

  const std::vector<std::size_t> p1{0, 1, 2}, t1{1, 1, 0}, p2{2, 2}, t2{0, 2};
  ConfusionMatrix split(3), whole(3);
  split.accumulate(p1, t1);
  split.accumulate(p2, t2);
  whole.accumulate(std::vector<std::size_t>{0, 1, 2, 2, 2}, std::vector<std::size_t>{1, 1, 0, 0, 2});
  CHECK(std::equal(split.counts().begin(), split.counts().end(), whole.counts().begin()));

  ConfusionMatrix shard_a(3), shard_b(3);
  shard_a.accumulate(p1, t1);
  shard_b.accumulate(p2, t2);
  shard_a.merge(shard_b);
  CHECK(std::equal(shard_a.counts().begin(), shard_a.counts().end(), whole.counts().begin()));

  const std::vector<std::size_t> bad{0, 3}, ok{0, 1};
  ConfusionMatrix untouched(3);
  CHECK_THROWS_AS(untouched.accumulate(bad, ok), IndexError);
  CHECK_THROWS_AS(untouched.accumulate(ok, bad), IndexError);
  CHECK(untouched.total() == 0);
  CHECK_THROWS_AS(untouched.accumulate(ok, std::vector<std::size_t>{0}), DimensionError);
  CHECK_THROWS_AS(untouched.merge(ConfusionMatrix(2)), DimensionError);
}

TEST_CASE("hand-counted metrics") {
  const ConfusionMatrix cm = from_counts({{2, 1}, {1, 2}});
  CHECK(oa(cm) == doctest::Approx(4.0 / 6.0));
  const auto iou = iou_per_class(cm);
  CHECK(iou[0].iou == 0.5);
  CHECK(iou[1].iou == 0.5);
  CHECK(miou(cm) == 0.5);
  CHECK(macc(cm) == doctest::Approx(2.0 / 3.0));

  const ConfusionMatrix perfect = from_counts({{5, 0, 0}, {0, 3, 0}, {0, 0, 7}});
  CHECK(oa(perfect) == 1.0);
  CHECK(miou(perfect) == 1.0);
  for (const ClassIoU& c : iou_per_class(perfect)) CHECK((c.defined && c.iou == 1.0));

  const ConfusionMatrix absent = from_counts({{4, 1, 0}, {2, 3, 0}, {0, 0, 0}});
  const auto a = iou_per_class(absent);
  CHECK(!a[2].defined);
  CHECK(miou(absent) == doctest::Approx((a[0].iou + a[1].iou) / 2.0));
}

TEST_CASE("undefined metrics") {
  const ConfusionMatrix empty(4);
  CHECK_THROWS_AS(oa(empty), UndefinedMetricError);
  CHECK_THROWS_AS(miou(empty), UndefinedMetricError);
  CHECK_THROWS_AS(macc(empty), UndefinedMetricError);
  for (const ClassIoU& c : iou_per_class(empty)) CHECK(!c.defined);
}

TEST_CASE("metrics match a per-point recount on random matrices") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng() % 7;
    std::vector<std::vector<std::size_t>> counts(c, std::vector<std::size_t>(c));
    for (auto& row : counts) {
      for (auto& v : row) v = rng() % 4 == 0 ? 0 : rng() % 40;
    }
    if (trial % 10 == 0) counts[rng() % c].assign(c, 0);  // a class absent from the truth
    const Points pts = expand(counts, rng);
    if (pts.pred.empty()) continue;
    ConfusionMatrix cm(c);
    cm.accumulate(pts.pred, pts.truth);

    std::size_t correct = 0;
    std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
    for (std::size_t i = 0; i < pts.pred.size(); ++i) {
      if (pts.pred[i] == pts.truth[i]) {
        ++correct;
        ++tp[pts.truth[i]];
      } else {
        ++fp[pts.pred[i]];
        ++fn[pts.truth[i]];
      }
    }
    CHECK(oa(cm) == static_cast<double>(correct) / static_cast<double>(pts.pred.size()));
    const auto iou = iou_per_class(cm);
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t d = tp[k] + fp[k] + fn[k];
      CHECK(iou[k].defined == (d > 0));
      if (d == 0) continue;
      const double ref = static_cast<double>(tp[k]) / static_cast<double>(d);
      CHECK(iou[k].iou == ref);
      sum += ref;
      ++defined;
    }
    const double m = miou(cm);
    CHECK(m == sum / static_cast<double>(defined));
    double lo = 1.0, hi = 0.0;
    for (const ClassIoU& x : iou) {
      if (!x.defined) continue;
      lo = std::min(lo, x.iou);
      hi = std::max(hi, x.iou);
    }
    CHECK(m >= lo);
    CHECK(m <= hi);
  }
}

TEST_CASE("uniform random predictions score about 1/C") {
  std::mt19937_64 rng(7);
  const std::size_t c = 6, n = 60000;
  std::vector<std::size_t> pred(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = rng() % c;
    truth[i] = rng() % c;
  }
  ConfusionMatrix cm(c);
  cm.accumulate(pred, truth);
  CHECK(std::abs(oa(cm) - 1.0 / 6.0) < 0.02);
}

TEST_CASE("metrics report formats") {
  const MetricsReport r = summarize(from_counts({{2, 1, 0}, {1, 2, 0}, {0, 0, 0}}));
  CHECK(to_csv(r) ==
        "class_id,iou,defined\n0,0.500000,1\n1,0.500000,1\n2,0.000000,0\noa,0.666667,1\nmiou,0.500000,1\n"
        "macc,0.666667,1\n");
  const std::vector<std::string> names{"a", "b", "c"};
  const nlohmann::json j = to_json(r, names);
  CHECK(j["points"] == 6);
  CHECK(j["classes"][2]["iou"].is_null());
  CHECK(j["classes"][1]["name"] == "b");
}

TEST_CASE("analysis totals equal the model's registered trainables") {
  for (BlockKind b : {BlockKind::SharedMlp, BlockKind::LocalAgg}) {
    for (TopologyKind k : all_topologies()) {
      for (int levels : {1, 2, 3}) {
        for (SupervisionMode mode : {SupervisionMode::NoDS, SupervisionMode::MultiLevel}) {
          const GraphSpec g = with_supervision(build_topology(k, levels, {}, {b, 8, 2}), mode);
          Model m(g, 6, 5, 1);
          const AnalysisReport r = analyze(g, 4096, 6, 5);
          CAPTURE(to_string(k));
          CAPTURE(levels);
          CHECK(r.total_params == m.parameter_count());
          std::size_t per_node = 0;
          for (const NodeCost& c : r.nodes) per_node += c.params;
          CHECK(per_node == r.node_params);
          CHECK(std::accumulate(r.row_fractions.begin(), r.row_fractions.end(), 0.0) ==
                doctest::Approx(1.0).epsilon(1e-12));
          double parts = 0.0;
          for (const auto& [name, share] : r.parts) parts += share;
          CHECK(parts == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("hand-counted UNet L=1 costs") {
  const GraphSpec g = build_topology(TopologyKind::UNet, 1);
  const AnalysisReport r = analyze(g, 4096, 6, 6);
  REQUIRE(r.nodes.size() == 3);
  // (0,0): 8->16->16 over 1024 points; (1,0): 16->64->64 over 256; (0,1): 80->16->16 over 1024.
  CHECK(r.nodes[0].points == 1024);
  CHECK(r.nodes[0].params == (8 * 16 + 48) + (16 * 16 + 48));
  CHECK(r.nodes[0].macs == 1024 * (8 * 16 + 16 * 16));
  CHECK(r.nodes[1].points == 256);
  CHECK(r.nodes[1].macs == 256 * (16 * 64 + 64 * 64));
  CHECK(r.nodes[2].macs == 1024 * (80 * 16 + 16 * 16));
  const std::size_t embed = 4096 * 6 * 8, final_head = 4096 * (16 * 64 + 64 * 32 + 32 * 6);
  CHECK(r.total_macs == r.nodes[0].macs + r.nodes[1].macs + r.nodes[2].macs + embed + final_head);
  CHECK(to_csv(r).starts_with("node_i,node_j,params,macs\n0,0,"));
  CHECK(to_json(r)["nodes"].size() == 3);
}

TEST_CASE("topology parameter ordering") {
  for (BlockKind b : {BlockKind::SharedMlp, BlockKind::LocalAgg}) {
    for (int levels : {2, 3, 4}) {
      std::vector<std::size_t> totals;
      for (TopologyKind k : {TopologyKind::UNet, TopologyKind::UNetPlus, TopologyKind::UNetPlusPlus,
                             TopologyKind::UNetPlusD, TopologyKind::UNext}) {
        totals.push_back(analyze(build_topology(k, levels, {}, {b, 16, 2}), 4096).total_params);
      }
      CAPTURE(levels);
      for (std::size_t i = 1; i < totals.size(); ++i) CHECK(totals[i - 1] < totals[i]);
    }
  }
}

TEST_CASE("UNext parameters scale at least 3x per level") {
  for (BlockKind b : {BlockKind::SharedMlp, BlockKind::LocalAgg}) {
    std::size_t prev = 0;
    for (int levels = 1; levels <= 4; ++levels) {
      const std::size_t p = analyze(build_topology(TopologyKind::UNext, levels, {}, {b, 16, 2}), 4096).total_params;
      if (prev) CHECK(static_cast<double>(p) >= 3.0 * static_cast<double>(prev));
      prev = p;
    }
  }
}

TEST_CASE("the deepest one-level U-Net dominates the parameter budget") {
  for (BlockKind b : {BlockKind::SharedMlp, BlockKind::LocalAgg}) {
    const AnalysisReport r =
        analyze(with_supervision(build_topology(TopologyKind::UNext, 4, {}, {b, 16, 2}), SupervisionMode::MultiLevel),
                4096);
    REQUIRE(r.parts.front().first == "deepest_subnetwork");
    for (std::size_t i = 1; i < r.parts.size(); ++i) CHECK(r.parts.front().second > r.parts[i].second);
    CHECK(r.deepest_subnetwork_share > 0.5);
    CHECK(r.backbone_share > r.extra_node_share);
  }
}

TEST_CASE("an empty graph costs nothing") {
  GraphSpec g;
  const AnalysisReport r = analyze(g, 4096);
  CHECK(r.total_params == 0);
  CHECK(r.total_macs == 0);
  CHECK(r.nodes.empty());
}
