#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "codecforge/config.hpp"
#include "codecforge/metrics.hpp"
#include "codecforge/model.hpp"
#include "codecforge/optim.hpp"
#include "codecforge/point_ops.hpp"
#include "codecforge/supervision.hpp"
#include "json.hpp"

namespace codecforge {

struct NamedBlob {
  std::string name;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::uint64_t epoch = 0;         // completed epochs
  std::vector<NamedBlob> params;   // trainables, then BN running statistics
  AdamState optimizer;
  std::string rng_state;           // shuffle generator, textual std::mt19937_64 state
};

// Raw little-endian doubles, so a save/load round trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochSummary {
  std::uint64_t epoch = 0;
  std::size_t steps = 0;
  double l_h = 0.0;  // mean over steps
  double l_ds = 0.0;
  double l_oa = 0.0;
  double train_oa = 0.0;
};

// One JSON object per line: a "step" record per optimizer step and an "epoch"
// record per epoch.
using LogSink = std::function<void(const nlohmann::json&)>;

class Trainer {
 public:
  // Every cloud must have at least cfg.points labeled points with
  // cfg.num_classes classes.
  Trainer(TrainConfig cfg, std::vector<PointCloud> data);

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return *model_; }
  std::uint64_t epoch() const { return epoch_; }

  // Trains one more epoch: seeded shuffle, then per batch a fresh hierarchy,
  // forward, hybrid loss, backward and an Adam step.
  EpochSummary run_epoch(const LogSink& log = {});

  Checkpoint checkpoint();
  // Throws ConfigError when the checkpoint belongs to a different config.
  void restore(const Checkpoint& ck);

 private:
  TrainConfig cfg_;
  std::vector<PointCloud> data_;
  std::unique_ptr<Model> model_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  AdamState adam_;
  std::mt19937_64 shuffle_rng_;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

// Runs epochs until cfg.epochs, checkpointing into cfg.output after each one
// (when set) and appending JSON lines to `log`. Resumes from
// <output>/checkpoint.bin when `resume` is set and the file exists.
std::vector<EpochSummary> train(Trainer& trainer, std::ostream* log, bool resume = false);

struct EvalOptions {
  std::uint64_t hierarchy_seed = 0;
  std::size_t points = 0;  // 0: every point of each cloud
};

// Dropout off, batch norm on running statistics. Each cloud is evaluated as
// its own sample.
MetricsReport evaluate(Model& model, const TrainConfig& cfg, std::span<const PointCloud> data,
                       const EvalOptions& opts = {});

// Rebuilds the model a checkpoint was written for and loads its parameters.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out = nullptr);

}  // namespace codecforge
