#include "codecforge/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "codecforge/errors.hpp"

namespace codecforge {

// ---- checkpoint file -------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

struct Reader {
  std::istream& in;
  const std::string& source;

  void raw(void* dst, std::size_t n) {
    if (!in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
      throw ParseError(source + ": truncated checkpoint");
    }
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::size_t length() {
    const std::uint64_t n = u64();
    if (n > (std::uint64_t{1} << 32)) throw ParseError(source + ": implausible length in checkpoint");
    return static_cast<std::size_t>(n);
  }
  std::string string() {
    std::string s(length(), '\0');
    raw(s.data(), s.size());
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(length());
    raw(v.data(), v.size() * sizeof(double));
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  // Write beside the target and rename, so an interrupted save keeps the previous file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u64(out, ck.config_hash);
    put_string(out, ck.config_text);
    put_u64(out, ck.epoch);
    put_u64(out, ck.params.size());
    for (const NamedBlob& b : ck.params) {
      put_string(out, b.name);
      put_doubles(out, b.values);
    }
    put_u64(out, ck.optimizer.step);
    put_u64(out, ck.optimizer.m.size());
    for (std::size_t i = 0; i < ck.optimizer.m.size(); ++i) {
      put_doubles(out, ck.optimizer.m[i]);
      put_doubles(out, ck.optimizer.v[i]);
    }
    put_string(out, ck.rng_state);
    if (!out) throw InputError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  const std::string source = path.string();
  Reader r{in, source};
  char magic[sizeof kCheckpointMagic];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw ParseError(source + ": not a checkpoint");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.config_text = r.string();
  ck.epoch = r.u64();
  const std::size_t n = r.length();
  for (std::size_t i = 0; i < n; ++i) {
    NamedBlob b;
    b.name = r.string();
    b.values = r.doubles();
    ck.params.push_back(std::move(b));
  }
  ck.optimizer.step = r.u64();
  const std::size_t moments = r.length();
  for (std::size_t i = 0; i < moments; ++i) {
    ck.optimizer.m.push_back(r.doubles());
    ck.optimizer.v.push_back(r.doubles());
  }
  ck.rng_state = r.string();
  return ck;
}

// ---- training ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kHierarchyStream = 3;
constexpr std::uint64_t kDropoutStream = 4;

std::vector<std::size_t> ratios_for(int levels) {
  return {kDefaultRatios.begin(), kDefaultRatios.begin() + levels + 1};
}

// `count` distinct indices of [0, n), ascending.
std::vector<std::size_t> choose_points(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (count >= n) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void load_params(Model& model, const std::vector<NamedBlob>& blobs) {
  std::size_t next = 0;
  auto take = [&](const std::string& name, std::span<double> dst) {
    if (next >= blobs.size() || blobs[next].name != name) {
      throw ConfigError("checkpoint does not match the model at parameter " + name);
    }
    const NamedBlob& b = blobs[next++];
    if (b.values.size() != dst.size()) throw ConfigError("checkpoint shape mismatch for " + name);
    std::copy(b.values.begin(), b.values.end(), dst.begin());
  };
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;
  model.visit(ParamVisitor{[&](const std::string& name, Tensor& t) { take(name, t.mutable_data()); },
                           [&](const std::string& name, std::vector<double>& b) { buffers.emplace_back(name, &b); }});
  for (auto& [name, b] : buffers) take(name, *b);
  if (next != blobs.size()) throw ConfigError("checkpoint holds more parameters than the model");
}

std::vector<NamedBlob> dump_params(Model& model) {
  std::vector<NamedBlob> params, buffers;
  model.visit(ParamVisitor{
      [&](const std::string& name, Tensor& t) { params.push_back({name, t.values()}); },
      [&](const std::string& name, std::vector<double>& b) { buffers.push_back({name, b}); }});
  params.insert(params.end(), buffers.begin(), buffers.end());
  return params;
}

nlohmann::json per_node_json(const LossReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, v] : r.per_node) j[std::to_string(id.row) + "," + std::to_string(id.col)] = v;
  return j;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<PointCloud> data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  validate(cfg_);
  if (data_.empty()) throw ConfigError("training needs at least one point cloud");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const PointCloud& c = data_[i];
    c.validate();
    if (!c.has_labels()) throw InputError("training cloud " + std::to_string(i) + " is unlabeled");
    if (c.num_classes != cfg_.num_classes) {
      throw ConfigError("training cloud " + std::to_string(i) + " has " + std::to_string(c.num_classes) +
                        " classes, config says " + std::to_string(cfg_.num_classes));
    }
    if (c.size() < cfg_.points) {
      throw ConfigError("training cloud " + std::to_string(i) + " has " + std::to_string(c.size()) +
                        " points, fewer than points = " + std::to_string(cfg_.points));
    }
  }
  model_ = std::make_unique<Model>(cfg_.graph(), cfg_.input_dim, cfg_.num_classes, cfg_.seed);
  model_->visit(ParamVisitor{[&](const std::string& name, Tensor& t) {
                               params_.push_back(t);
                               names_.push_back(name);
                             },
                             nullptr});
  shuffle_rng_.seed(mix_seed(cfg_.seed, kShuffleStream));
}

EpochSummary Trainer::run_epoch(const LogSink& log) {
  const std::uint64_t epoch = epoch_ + 1;
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  const std::vector<std::size_t> ratios = ratios_for(cfg_.levels);
  const GraphSpec& g = model_->graph();
  ConfusionMatrix cm(cfg_.num_classes);
  EpochSummary summary;
  summary.epoch = epoch;

  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t batch = summary.steps;
    std::vector<SamplingHierarchy> parts;
    std::vector<Tensor> features;
    std::vector<std::size_t> labels;
    for (std::size_t s = start; s < std::min(order.size(), start + cfg_.batch_size); ++s) {
      const PointCloud& cloud = data_[order[s]];
      const PointCloud sample =
          cloud.subset(choose_points(cloud.size(), cfg_.points, mix_seed(cfg_.seed, kSampleStream, epoch, s)));
      parts.push_back(build_hierarchy(sample, ratios, cfg_.k, mix_seed(cfg_.seed, kHierarchyStream, epoch, s)));
      features.push_back(sample.features(cfg_.input_dim));
      labels.insert(labels.end(), sample.labels.begin(), sample.labels.end());
    }
    const SamplingHierarchy hier = parts.size() == 1 ? parts.front() : SamplingHierarchy::concatenate(parts);
    const Tensor x = features.size() == 1 ? features.front() : concat(features, 0);

    for (Tensor& p : params_) p.clear_grad();
    const ModelOutput out = model_->forward(hier, x, true, mix_seed(cfg_.seed, kDropoutStream, epoch, batch));
    const HybridLoss loss = hybrid_loss(out, labels, hier, g, cfg_.num_classes);
    backward(loss.total);
    adam_step(params_, names_, adam_, cfg_.adam);
    ++step_;

    cm.accumulate(argmax_rows(out.logits), labels);
    summary.l_h += loss.report.l_h;
    summary.l_ds += loss.report.l_ds;
    summary.l_oa += loss.report.l_oa;
    ++summary.steps;
    if (log) {
      log({{"type", "step"},
           {"epoch", epoch},
           {"step", step_},
           {"l_h", loss.report.l_h},
           {"l_ds", loss.report.l_ds},
           {"l_oa", loss.report.l_oa},
           {"n_supervised", loss.report.n_supervised},
           {"C", loss.report.num_classes},
           {"L", loss.report.levels},
           {"per_node", per_node_json(loss.report)}});
    }
  }

  const double steps = static_cast<double>(summary.steps);
  summary.l_h /= steps;
  summary.l_ds /= steps;
  summary.l_oa /= steps;
  summary.train_oa = oa(cm);
  epoch_ = epoch;
  if (log) {
    log({{"type", "epoch"},
         {"epoch", epoch},
         {"steps", summary.steps},
         {"l_h", summary.l_h},
         {"l_ds", summary.l_ds},
         {"l_oa", summary.l_oa},
         {"train_oa", summary.train_oa}});
  }
  return summary;
}

Checkpoint Trainer::checkpoint() {
  Checkpoint ck;
  ck.config_hash = config_hash(cfg_);
  ck.config_text = to_text(cfg_);
  ck.epoch = epoch_;
  ck.params = dump_params(*model_);
  ck.optimizer = adam_;
  std::ostringstream rng;
  rng << shuffle_rng_;
  ck.rng_state = rng.str();
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.config_hash != config_hash(cfg_)) {
    throw ConfigError("checkpoint was written for a different configuration (hash mismatch)");
  }
  load_params(*model_, ck.params);
  adam_ = ck.optimizer;
  std::istringstream rng(ck.rng_state);
  rng >> shuffle_rng_;
  if (!rng) throw ParseError("checkpoint holds a malformed generator state");
  epoch_ = ck.epoch;
  step_ = ck.optimizer.step;
}

std::vector<EpochSummary> train(Trainer& trainer, std::ostream* log, bool resume) {
  const TrainConfig& cfg = trainer.config();
  std::filesystem::path ckpt;
  if (!cfg.output.empty()) {
    std::filesystem::create_directories(cfg.output);
    ckpt = std::filesystem::path(cfg.output) / "checkpoint.bin";
    if (resume && std::filesystem::exists(ckpt)) trainer.restore(load_checkpoint(ckpt));
  }
  const LogSink sink = [&](const nlohmann::json& j) {
    if (log) *log << j.dump() << '\n' << std::flush;
  };
  std::vector<EpochSummary> out;
  while (trainer.epoch() < cfg.epochs) {
    out.push_back(trainer.run_epoch(sink));
    if (!ckpt.empty()) save_checkpoint(ckpt, trainer.checkpoint());
  }
  return out;
}

MetricsReport evaluate(Model& model, const TrainConfig& cfg, std::span<const PointCloud> data,
                       const EvalOptions& opts) {
  if (data.empty()) throw ConfigError("evaluation needs at least one point cloud");
  NoGradGuard no_grad;
  ConfusionMatrix cm(model.num_classes());
  const std::vector<std::size_t> ratios = ratios_for(model.graph().levels);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const PointCloud& full = data[i];
    full.validate();
    if (!full.has_labels()) throw InputError("evaluation cloud " + std::to_string(i) + " is unlabeled");
    if (full.num_classes != model.num_classes()) {
      throw ConfigError("evaluation cloud " + std::to_string(i) + " has " + std::to_string(full.num_classes) +
                        " classes, the model predicts " + std::to_string(model.num_classes()));
    }
    const PointCloud cloud =
        opts.points > 0 && opts.points < full.size()
            ? full.subset(choose_points(full.size(), opts.points, mix_seed(opts.hierarchy_seed, kSampleStream, i)))
            : full;
    const SamplingHierarchy hier =
        build_hierarchy(cloud, ratios, cfg.k, mix_seed(opts.hierarchy_seed, kHierarchyStream, i));
    const ModelOutput out = model.forward(hier, cloud.features(model.input_dim()), false, 0);
    cm.accumulate(argmax_rows(out.logits), cloud.labels);
  }
  return summarize(cm);
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out) {
  const TrainConfig cfg = parse_config(ck.config_text, "checkpoint config");
  if (config_hash(cfg) != ck.config_hash) throw ConfigError("checkpoint config text does not match its hash");
  auto model = std::make_unique<Model>(cfg.graph(), cfg.input_dim, cfg.num_classes, cfg.seed);
  load_params(*model, ck.params);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace codecforge
