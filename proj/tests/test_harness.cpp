#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "codecforge/config.hpp"
#include "codecforge/errors.hpp"
#include "codecforge/io.hpp"
#include "codecforge/optim.hpp"
#include "codecforge/scene.hpp"
#include "codecforge/trainer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace codecforge;
namespace fs = std::filesystem;

namespace {

std::string pcseg_text(const PointCloud& c) {
  std::ostringstream out;
  write_pcseg(out, c);
  return out.str();
}

SceneSpec small_scene(std::size_t points) {
  SceneSpec s;
  s.points = points;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("codecforge_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig c;
  c.levels = 2;
  c.points = 512;
  c.batch_size = 2;
  c.epochs = 2;
  c.seed = seed;
  return c;
}

std::vector<PointCloud> tiny_data() {
  return {generate_scene(small_scene(1024), 11), generate_scene(small_scene(1024), 12),
          generate_scene(small_scene(1024), 13)};
}

std::vector<double> flat_params(Model& m) {
  std::vector<double> out;
  m.visit(ParamVisitor{[&](const std::string&, Tensor& t) {
                         out.insert(out.end(), t.data().begin(), t.data().end());
                       },
                       nullptr});
  return out;
}

}  // namespace

TEST_CASE("scene generation") {
  const SceneSpec spec = small_scene(4096);

  SUBCASE("same seed gives identical files, another seed does not") {
    CHECK(pcseg_text(generate_scene(spec, 5)) == pcseg_text(generate_scene(spec, 5)));
    CHECK(pcseg_text(generate_scene(spec, 5)) != pcseg_text(generate_scene(spec, 6)));
  }

  SUBCASE("every class has at least K points") {
    const PointCloud c = generate_scene(spec, 3);
    CHECK(c.size() == 4096);
    CHECK(c.num_classes == kSceneClasses);
    std::vector<std::size_t> hist(kSceneClasses, 0);
    for (const std::size_t l : c.labels) ++hist[l];
    for (std::size_t k = 0; k < kSceneClasses; ++k) CHECK(hist[k] >= kDefaultNeighbors);
  }

  SUBCASE("floor points lie within four sigma of the floor plane") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const PointCloud c = generate_scene(spec, seed);
      double worst = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.labels[i] == static_cast<std::size_t>(SceneClass::Floor)) worst = std::max(worst, std::abs(c.coords[i][2]));
      }
      CHECK(worst <= 4.0 * spec.noise_sigma);
    }
  }

  SUBCASE("colors stay in the unit cube") {
    const PointCloud c = generate_scene(spec, 9);
    for (const Point3& rgb : c.colors) {
      for (const double v : rgb) CHECK((v >= 0.0 && v <= 1.0));
    }
  }

  SUBCASE("too few points for the class minimums") {
    CHECK_THROWS_AS(generate_scene(small_scene(60), 1), GenerationError);
    SceneSpec sparse;
    sparse.density = 0.5;
    CHECK_THROWS_AS(generate_scene(sparse, 1), GenerationError);
  }
}

TEST_CASE("point-cloud files") {
  SUBCASE("save, load, save gives identical bytes") {
    const std::string first = pcseg_text(generate_scene(small_scene(2048), 4));
    std::istringstream in(first);
    CHECK(pcseg_text(read_pcseg(in)) == first);
  }

  SUBCASE("three-point fixture") {
    std::istringstream in(
        "PCSEG v1 3 2\n"
        "0.000000 0.000000 0.000000 0.100000 0.200000 0.300000 0\n"
        "1.000000 0.500000 -0.250000 1.000000 1.000000 1.000000 1\n"
        "2.125000 3.000000 4.000000 0.000000 0.000000 0.000000 1\n");
    const PointCloud c = read_pcseg(in);
    CHECK(c.size() == 3);
    CHECK(c.num_classes == 2);
    CHECK(c.coords[1] == Point3{1.0, 0.5, -0.25});
    CHECK(c.colors[0][2] == doctest::Approx(0.3));
    CHECK(c.labels == std::vector<std::size_t>{0, 1, 1});
  }

  SUBCASE("header count disagreeing with the body") {
    std::istringstream short_body("PCSEG v1 3 2\n0 0 0 0 0 0 0\n1 1 1 0 0 0 1\n");
    try {
      read_pcseg(short_body, "short.pcseg");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("short.pcseg") != std::string::npos);
      CHECK(msg.find("3") != std::string::npos);
      CHECK(msg.find("2") != std::string::npos);
    }
    std::istringstream long_body("PCSEG v1 1 2\n0 0 0 0 0 0 0\n1 1 1 0 0 0 1\n");
    CHECK_THROWS_AS(read_pcseg(long_body), ParseError);
  }

  SUBCASE("errors carry the line number") {
    const auto message = [](const std::string& text) {
      std::istringstream in(text);
      try {
        read_pcseg(in, "f");
      } catch (const ParseError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("PCSEG v2 1 2\n0 0 0 0 0 0 0\n").find("f:1:") == 0);
    CHECK(message("POINTS 1 2\n").find("f:1:") == 0);
    CHECK(message("PCSEG v1 2 2\n0 0 0 0 0 0 0\n0 0 0 0 0 0\n").find("f:3:") == 0);
    CHECK(message("PCSEG v1 2 2\n0 0 0 0 0 0 0\n0 0 0 0 0 0 2\n").find("f:3:") == 0);
    CHECK(message("PCSEG v1 1 2\n0 0 0 0 1.5 0 0\n").find("f:2:") == 0);
  }

  SUBCASE("binary twin round trip") {
    const PointCloud c = generate_scene(small_scene(1024), 8);
    std::stringstream buf;
    write_pcsb(buf, c);
    CHECK(buf.str().size() == 12 + c.size() * (6 * 4 + 2));
    const PointCloud back = read_pcsb(buf);
    CHECK(back.labels == c.labels);
    CHECK(back.num_classes == c.num_classes);
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        CHECK(back.coords[i][a] == static_cast<double>(static_cast<float>(c.coords[i][a])));
        CHECK(back.colors[i][a] == static_cast<double>(static_cast<float>(c.colors[i][a])));
      }
    }
  }

  SUBCASE("load detects the format from the file") {
    const fs::path dir = scratch_dir("io");
    const PointCloud c = generate_scene(small_scene(512), 2);
    save_cloud(dir / "a.pcseg", c);
    save_cloud(dir / "a.pcsb", c);
    CHECK(load_cloud(dir / "a.pcseg").labels == c.labels);
    CHECK(load_cloud(dir / "a.pcsb").labels == c.labels);
    CHECK_THROWS_AS(load_cloud(dir / "missing.pcseg"), InputError);
    fs::remove_all(dir);
  }
}

TEST_CASE("adam") {
  std::vector<std::string> names{"w"};

  SUBCASE("constant gradient follows the scalar recurrence") {
    for (const double g : {0.3, -2.0, 1e-3}) {
      std::vector<Tensor> p{Tensor({2}, {0.5, -0.25})};
      AdamState st;
      AdamConfig cfg;
      double w0 = 0.5, w1 = -0.25, m = 0.0, v = 0.0;
      for (int t = 1; t <= 50; ++t) {
        p[0].zero_grad();
        for (double& x : p[0].mutable_grad()) x = g;
        adam_step(p, names, st, cfg);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
        w0 -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        w1 -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      }
      CHECK(std::abs(p[0].data()[0] - w0) < 1e-10);
      CHECK(std::abs(p[0].data()[1] - w1) < 1e-10);
      CHECK(st.step == 50);
    }
  }

  SUBCASE("zero gradients leave parameters and moments untouched") {
    std::vector<Tensor> p{Tensor({3}, {1.0, 2.0, 3.0})};
    const std::vector<double> before(p[0].data().begin(), p[0].data().end());
    AdamState st;
    for (int t = 0; t < 5; ++t) {
      p[0].zero_grad();
      adam_step(p, names, st, AdamConfig{});
    }
    CHECK(testing::bit_equal(p[0].data(), before));
    for (const double x : st.m[0]) CHECK(x == 0.0);
    for (const double x : st.v[0]) CHECK(x == 0.0);
  }

  SUBCASE("first step moves by about lr against the sign") {
    std::vector<Tensor> p{Tensor({4}, {0.0, 0.0, 0.0, 0.0})};
    p[0].zero_grad();
    const std::vector<double> g{0.5, -3.0, 1e-2, -1e-4};
    std::copy(g.begin(), g.end(), p[0].mutable_grad().begin());
    AdamState st;
    adam_step(p, names, st, AdamConfig{});
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(p[0].data()[i] == doctest::Approx(g[i] > 0 ? -0.01 : 0.01).epsilon(1e-3));
    }
  }

  SUBCASE("non-finite gradient names the parameter and changes nothing") {
    std::vector<Tensor> p{Tensor({1}, {1.0}), Tensor({2}, {2.0, 3.0})};
    std::vector<std::string> two{"encoder.weight", "decoder.bias"};
    for (Tensor& t : p) t.zero_grad();
    p[0].mutable_grad()[0] = 0.5;
    p[1].mutable_grad()[1] = std::numeric_limits<double>::quiet_NaN();
    AdamState st;
    try {
      adam_step(p, two, st, AdamConfig{});
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("decoder.bias") != std::string::npos);
    }
    CHECK(p[0].data()[0] == 1.0);
    CHECK(st.step == 0);
  }
}

TEST_CASE("config files") {
  SUBCASE("parses keys, comments and blanks") {
    const TrainConfig c = parse_config(
        "# run\nseed = 42\ntopology = unet\nlevels=2\nblock = local_agg\nsupervision = none\n\nlr = 0.001 # low\n"
        "dims = wide\ndata = a.pcseg, b.pcseg\n");
    CHECK(c.seed == 42);
    CHECK(c.topology == TopologyKind::UNet);
    CHECK(c.levels == 2);
    CHECK(c.block == BlockKind::LocalAgg);
    CHECK(c.supervision == SupervisionMode::NoDS);
    CHECK(c.adam.lr == 0.001);
    CHECK(c.dims == "wide");
    CHECK(c.data == std::vector<std::string>{"a.pcseg", "b.pcseg"});
    CHECK(c.k == 16);
    CHECK(c.batch_size == 4);
  }

  SUBCASE("text round trip") {
    TrainConfig c = tiny_config(9);
    c.adam.lr = 0.1 / 3.0;
    c.data = {"x", "y"};
    const TrainConfig back = parse_config(to_text(c));
    CHECK(to_text(back) == to_text(c));
    CHECK(back.adam.lr == c.adam.lr);
    CHECK(config_hash(back) == config_hash(c));
  }

  SUBCASE("errors name the line") {
    const auto message = [](const std::string& text) {
      try {
        parse_config(text, "run.cfg");
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("seed = 1\nlearning_rate = 0.1\n").find("run.cfg:2:") == 0);
    CHECK(message("seed = 1\nlevels = three\n").find("run.cfg:2:") == 0);
    CHECK(message("seed = 1\nno equals sign\n").find("run.cfg:2:") == 0);
    CHECK(message("levels = 2\n").find("seed") != std::string::npos);
    CHECK(!message("seed = 1\nlevels = 0\n").empty());
    CHECK(!message("seed = 1\nbatch_size = 0\n").empty());
    CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), ConfigError);
  }

  SUBCASE("hash ignores epochs, data and output only") {
    const TrainConfig a = tiny_config(1);
    TrainConfig b = a;
    b.epochs = 99;
    b.data = {"elsewhere"};
    b.output = "other";
    CHECK(config_hash(a) == config_hash(b));
    b.adam.lr = 0.02;
    CHECK(config_hash(a) != config_hash(b));
    TrainConfig c = a;
    c.seed = 2;
    CHECK(config_hash(a) != config_hash(c));
  }
}

TEST_CASE("training loop") {
  const std::vector<PointCloud> data = tiny_data();

  SUBCASE("zero learning rate keeps every parameter bit-exact") {
    TrainConfig cfg = tiny_config(3);
    cfg.adam.lr = 0.0;
    Trainer t(cfg, data);
    const std::vector<double> before = flat_params(t.model());
    t.run_epoch();
    CHECK(testing::bit_equal(flat_params(t.model()), before));
  }

  SUBCASE("identical seeds give identical logs") {
    const auto run = [&](std::uint64_t seed) {
      Trainer t(tiny_config(seed), data);
      std::ostringstream log;
      train(t, &log);
      return std::make_pair(log.str(), flat_params(t.model()));
    };
    const auto a = run(5), b = run(5), c = run(6);
    CHECK(a.first == b.first);
    CHECK(testing::bit_equal(a.second, b.second));
    CHECK(a.first != c.first);
  }

  SUBCASE("log records") {
    Trainer t(tiny_config(2), data);
    std::vector<nlohmann::json> records;
    const EpochSummary s = t.run_epoch([&](const nlohmann::json& j) { records.push_back(j); });
    REQUIRE(records.size() == s.steps + 1);
    CHECK(s.steps == 2);
    const nlohmann::json& step = records.front();
    CHECK(step["type"] == "step");
    CHECK(step["C"] == 6);
    CHECK(step["L"] == 2);
    CHECK(step["n_supervised"] == 3);
    CHECK(step["l_h"].get<double>() == step["l_ds"].get<double>() + step["l_oa"].get<double>());
    CHECK(records.back()["type"] == "epoch");
    CHECK(records.back()["train_oa"].get<double>() >= 0.0);
  }

  SUBCASE("checkpoint round trip and resume are bit-exact") {
    const fs::path dir = scratch_dir("resume");
    TrainConfig cfg = tiny_config(7);
    cfg.epochs = 3;

    Trainer straight(cfg, data);
    std::ostringstream full_log;
    train(straight, &full_log);

    TrainConfig first = cfg;
    first.epochs = 1;
    first.output = dir.string();
    Trainer a(first, data);
    std::ostringstream log_a;
    train(a, &log_a);

    const Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");
    save_checkpoint(dir / "copy.bin", ck);
    std::ifstream f1(dir / "checkpoint.bin", std::ios::binary), f2(dir / "copy.bin", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK(ck.epoch == 1);

    TrainConfig rest = cfg;
    rest.output = dir.string();
    Trainer b(rest, data);
    std::ostringstream log_b;
    train(b, &log_b, true);
    CHECK(b.epoch() == 3);
    CHECK(log_a.str() + log_b.str() == full_log.str());
    CHECK(testing::bit_equal(flat_params(b.model()), flat_params(straight.model())));
    fs::remove_all(dir);
  }

  SUBCASE("resuming under a different config is an error") {
    Trainer a(tiny_config(1), data);
    a.run_epoch();
    TrainConfig other = tiny_config(1);
    other.adam.lr = 0.05;
    Trainer b(other, data);
    CHECK_THROWS_AS(b.restore(a.checkpoint()), ConfigError);
  }

  SUBCASE("rejects unusable data") {
    CHECK_THROWS_AS(Trainer(tiny_config(1), {}), ConfigError);
    TrainConfig big = tiny_config(1);
    big.points = 4096;
    CHECK_THROWS(Trainer(big, data));
  }
}

TEST_CASE("evaluation") {
  const std::vector<PointCloud> data = tiny_data();
  Trainer t(tiny_config(4), data);
  t.run_epoch();

  SUBCASE("deterministic") {
    const MetricsReport a = evaluate(t.model(), t.config(), data);
    const MetricsReport b = evaluate(t.model(), t.config(), data);
    CHECK(a.oa == b.oa);
    CHECK(a.miou == b.miou);
    CHECK(a.points == 3 * 1024);
  }

  SUBCASE("restored checkpoint evaluates identically") {
    TrainConfig cfg;
    const auto m = model_from_checkpoint(t.checkpoint(), &cfg);
    CHECK(config_hash(cfg) == config_hash(t.config()));
    CHECK(evaluate(*m, cfg, data).oa == evaluate(t.model(), t.config(), data).oa);
  }

  SUBCASE("class-count mismatch") {
    PointCloud c = data[0];
    c.num_classes = 7;
    CHECK_THROWS_AS(evaluate(t.model(), t.config(), std::vector<PointCloud>{c}), ConfigError);
  }

  SUBCASE("untrained model on balanced labels is at chance") {
    TrainConfig cfg = tiny_config(21);
    Trainer fresh(cfg, data);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    std::vector<PointCloud> balanced(2);
    for (PointCloud& c : balanced) {
      c.num_classes = 6;
      for (std::size_t i = 0; i < 3000; ++i) {
        c.coords.push_back({u(rng), u(rng), u(rng) * 0.5});
        c.colors.push_back({u(rng) / 4.0, u(rng) / 4.0, u(rng) / 4.0});
        c.labels.push_back(i % 6);
      }
    }
    const double oa = evaluate(fresh.model(), cfg, balanced).oa;
    CHECK(std::abs(oa - 1.0 / 6.0) <= 0.1);
  }
}
