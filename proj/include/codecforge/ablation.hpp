#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "codecforge/config.hpp"
#include "codecforge/scene.hpp"

namespace codecforge {

struct AblationArm {
  std::string name;
  TopologyKind topology = TopologyKind::UNext;
  SupervisionMode supervision = SupervisionMode::MultiLevel;
};

struct AblationOptions {
  TrainConfig base;  // seed is replaced per run
  std::vector<AblationArm> arms;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t train_scenes = 8;
  std::size_t test_scenes = 4;
  SceneSpec train_spec;
  SceneSpec test_spec;  // held out; usually richer in thin boards and columns
  std::uint64_t data_seed = 1000;
};

struct AblationRow {
  std::string arm;
  TopologyKind topology = TopologyKind::UNext;
  SupervisionMode supervision = SupervisionMode::MultiLevel;
  std::uint64_t seed = 0;
  std::size_t params = 0;
  double oa = 0.0;
  double miou = 0.0;
  double thin_board_iou = 0.0;
  double column_iou = 0.0;
  double final_loss = 0.0;
};

// The arms of the topology and supervision comparisons: UNet, UNet+, UNet++,
// UNet+d and UNext with multi-level supervision, then UNext without it.
std::vector<AblationArm> default_arms();

// Every arm trains on the same scenes with the same seeds, so runs differ only
// in architecture. `progress` receives one line per finished run.
std::vector<AblationRow> run_ablation(const AblationOptions& opts,
                                      const std::function<void(const AblationRow&)>& progress = {});

struct ArmSummary {
  std::string arm;
  std::size_t runs = 0;
  double mean_oa = 0.0;
  double mean_miou = 0.0;
  double mean_thin_board_iou = 0.0;
  double mean_column_iou = 0.0;
};

std::vector<ArmSummary> summarize(const std::vector<AblationRow>& rows);

// One row per run, then one "mean" row per arm. Metrics in percent.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace codecforge
