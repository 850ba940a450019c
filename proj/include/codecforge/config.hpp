#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codecforge/blocks.hpp"
#include "codecforge/graph.hpp"
#include "codecforge/optim.hpp"
#include "codecforge/supervision.hpp"

namespace codecforge {

// Desk-scale defaults. Full scale: points = 40960, levels = 4, epochs ~ 100.
struct TrainConfig {
  TopologyKind topology = TopologyKind::UNext;
  int levels = 3;
  BlockKind block = BlockKind::SharedMlp;
  std::string dims = "default";  // "default" or "wide"
  std::size_t width_mult = 1;
  SupervisionMode supervision = SupervisionMode::MultiLevel;
  std::size_t k = kDefaultNeighbors;
  std::size_t points = 4096;  // per sample
  std::size_t batch_size = 4;
  AdamConfig adam;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t input_dim = 6;
  std::size_t num_classes = 6;
  std::vector<std::string> data;  // training files; paths are not part of the hash
  std::string output;             // run directory

  DimSchedule dim_schedule() const;
  GraphSpec graph() const;
};

// Flat "key = value" lines; '#' starts a comment. Every key is optional except
// seed. Unknown keys, malformed values and a missing seed throw ConfigError
// naming the line.
TrainConfig parse_config(const std::string& text, const std::string& source = "<config>");
TrainConfig load_config(const std::filesystem::path& path);
std::string to_text(const TrainConfig& cfg);

// Validates ranges; throws ConfigError.
void validate(const TrainConfig& cfg);

// FNV-1a over every field that shapes the model or the optimisation
// trajectory. Epochs, data paths and the output directory are excluded so a
// run can be extended or moved and still resume.
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace codecforge
