#include "codecforge/ablation.hpp"

#include <cstdio>
#include <map>

#include "codecforge/analysis.hpp"
#include "codecforge/errors.hpp"
#include "codecforge/trainer.hpp"

namespace codecforge {

std::vector<AblationArm> default_arms() {
  return {{"unet", TopologyKind::UNet, SupervisionMode::MultiLevel},
          {"unetplus", TopologyKind::UNetPlus, SupervisionMode::MultiLevel},
          {"unetplusplus", TopologyKind::UNetPlusPlus, SupervisionMode::MultiLevel},
          {"unetplusd", TopologyKind::UNetPlusD, SupervisionMode::MultiLevel},
          {"unext", TopologyKind::UNext, SupervisionMode::MultiLevel},
          {"unext_nods", TopologyKind::UNext, SupervisionMode::NoDS}};
}

std::vector<AblationRow> run_ablation(const AblationOptions& opts,
                                      const std::function<void(const AblationRow&)>& progress) {
  if (opts.arms.empty() || opts.seeds.empty()) throw ConfigError("ablation needs at least one arm and one seed");
  std::vector<PointCloud> train_set, test_set;
  for (std::size_t i = 0; i < opts.train_scenes; ++i) {
    train_set.push_back(generate_scene(opts.train_spec, mix_seed(opts.data_seed, 1, i)));
  }
  for (std::size_t i = 0; i < opts.test_scenes; ++i) {
    test_set.push_back(generate_scene(opts.test_spec, mix_seed(opts.data_seed, 2, i)));
  }

  std::vector<AblationRow> rows;
  for (const AblationArm& arm : opts.arms) {
    for (const std::uint64_t seed : opts.seeds) {
      TrainConfig cfg = opts.base;
      cfg.topology = arm.topology;
      cfg.supervision = arm.supervision;
      cfg.seed = seed;
      cfg.output.clear();
      Trainer trainer(cfg, train_set);
      const std::vector<EpochSummary> log = train(trainer, nullptr);
      EvalOptions eval;
      eval.hierarchy_seed = mix_seed(opts.data_seed, 3);
      eval.points = cfg.points;
      const MetricsReport m = evaluate(trainer.model(), cfg, test_set, eval);

      AblationRow row;
      row.arm = arm.name;
      row.topology = arm.topology;
      row.supervision = arm.supervision;
      row.seed = seed;
      row.params = trainer.model().parameter_count();
      row.oa = m.oa;
      row.miou = m.miou;
      row.thin_board_iou = m.per_class.at(static_cast<std::size_t>(SceneClass::ThinBoard)).iou;
      row.column_iou = m.per_class.at(static_cast<std::size_t>(SceneClass::Column)).iou;
      row.final_loss = log.empty() ? 0.0 : log.back().l_h;
      rows.push_back(row);
      if (progress) progress(row);
    }
  }
  return rows;
}

std::vector<ArmSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<ArmSummary> out;
  std::map<std::string, std::size_t> index;
  for (const AblationRow& r : rows) {
    auto [it, fresh] = index.emplace(r.arm, out.size());
    if (fresh) out.push_back({r.arm});
    ArmSummary& s = out[it->second];
    ++s.runs;
    s.mean_oa += r.oa;
    s.mean_miou += r.miou;
    s.mean_thin_board_iou += r.thin_board_iou;
    s.mean_column_iou += r.column_iou;
  }
  for (ArmSummary& s : out) {
    const double n = static_cast<double>(s.runs);
    s.mean_oa /= n;
    s.mean_miou /= n;
    s.mean_thin_board_iou /= n;
    s.mean_column_iou /= n;
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "arm,topology,supervision,seed,params,oa,miou,thin_board_iou,column_iou,final_loss\n";
  char buf[512];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%llu,%zu,%.2f,%.2f,%.2f,%.2f,%.6f\n", r.arm.c_str(),
                  to_string(r.topology).c_str(), to_string(r.supervision).c_str(),
                  static_cast<unsigned long long>(r.seed), r.params, 100.0 * r.oa, 100.0 * r.miou,
                  100.0 * r.thin_board_iou, 100.0 * r.column_iou, r.final_loss);
    out += buf;
  }
  std::map<std::string, const AblationRow*> first;
  for (const AblationRow& r : rows) first.emplace(r.arm, &r);
  for (const ArmSummary& s : summarize(rows)) {
    const AblationRow& r = *first.at(s.arm);
    std::snprintf(buf, sizeof buf, "%s,%s,%s,mean,%zu,%.2f,%.2f,%.2f,%.2f,\n", s.arm.c_str(),
                  to_string(r.topology).c_str(), to_string(r.supervision).c_str(), r.params, 100.0 * s.mean_oa,
                  100.0 * s.mean_miou, 100.0 * s.mean_thin_board_iou, 100.0 * s.mean_column_iou);
    out += buf;
  }
  return out;
}

}  // namespace codecforge
