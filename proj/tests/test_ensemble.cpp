#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "md/embedding.hpp"
#include "md/rng.hpp"
#include "md/rnn.hpp"
#include "md/stacking.hpp"
#include "sequences.hpp"

using namespace md;
namespace fs = std::filesystem;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RnnParams random_params(CellKind kind, int d, int h, std::uint64_t seed, double scale = 0.5) {
  RnnParams p = RnnParams::zeros(kind, d, h);
  Rng rng(seed);
  for (double& v : p.values) v = rng.uniform(-scale, scale);
  return p;
}

Steps random_steps(Rng& rng, int t, int d) {
  Steps s(static_cast<std::size_t>(t), std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& x : s)
    for (double& v : x) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("block statistics embedding") {
  const auto flat = extract_features(Frame(100, 60, 3, 80.0));
  REQUIRE(flat.size() == 392);
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    CHECK(flat[i] == doctest::Approx(80.0 / 255.0).epsilon(1e-7));
    CHECK(flat[i + 1] == 0.0);
  }

  Frame board(224, 224, 1);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) board.at(x, y) = ((x / 16 + y / 16) % 2) ? 255.0 : 0.0;
  const auto f = extract_features(board);
  for (int by = 0; by < 14; ++by) {
    for (int bx = 0; bx < 14; ++bx) {
      const std::size_t i = 2 * static_cast<std::size_t>(by * 14 + bx);
      CHECK(f[i] == ((bx + by) % 2 ? 1.0 : 0.0));
      CHECK(f[i + 1] == 0.0);
    }
  }

  // 8-px stripes: each block is half 0, half 255.
  Frame stripes(224, 224, 1);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) stripes.at(x, y) = (x / 8) % 2 ? 255.0 : 0.0;
  const auto s = extract_features(stripes);
  for (std::size_t i = 0; i < s.size(); i += 2) {
    CHECK(s[i] == doctest::Approx(0.5));
    CHECK(s[i + 1] == doctest::Approx(1.0));
  }
}

TEST_CASE("feature file round trip") {
  const fs::path p = fs::temp_directory_path() / "md_test.mdfv";
  Rng rng(1);
  std::vector<std::vector<double>> rows(3, std::vector<double>(5));
  for (auto& r : rows)
    for (double& v : r) v = static_cast<float>(rng.uniform());
  write_feature_file(p, rows);
  CHECK(read_feature_file(p) == rows);
  CHECK(fs::file_size(p) == 4 + 8 + 15 * 4);
  fs::resize_file(p, 20);
  CHECK_THROWS_AS(read_feature_file(p), std::runtime_error);
  std::ofstream(p) << "XXXXjunk";
  CHECK_THROWS_WITH_AS(read_feature_file(p), doctest::Contains("magic"), std::runtime_error);
  fs::remove(p);
}

TEST_CASE("zero weights give an even split") {
  Rng rng(2);
  for (CellKind k : {CellKind::lstm, CellKind::bilstm, CellKind::gru}) {
    const auto pr = rnn_forward(RnnParams::zeros(k, 6, 3), random_steps(rng, 4, 6));
    CHECK(pr[0] == 0.5);
    CHECK(pr[1] == 0.5);
  }
}

TEST_CASE("softmax outputs are a distribution") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const CellKind k = static_cast<CellKind>(trial % 3);
    const auto p = random_params(k, 4, 5, static_cast<std::uint64_t>(trial), 2.0);
    const auto pr = rnn_forward(p, random_steps(rng, 1 + trial % 5, 4));
    CHECK(pr[0] >= 0.0);
    CHECK(pr[1] >= 0.0);
    CHECK(std::abs(pr[0] + pr[1] - 1.0) < 1e-9);
  }
}

TEST_CASE("saturated GRU update gate holds the initial state") {
  auto p = random_params(CellKind::gru, 3, 4, 5, 1.0);
  const std::size_t bias = 3 * 4 * 3 + 3 * 4 * 4;
  for (int k = 0; k < 4; ++k) p.values[bias + k] = 60.0;
  Rng rng(6);
  const std::size_t head_b = p.head_offset() + 2 * 4;
  const double b0 = p.values[head_b], b1 = p.values[head_b + 1];
  const double expect_live = std::exp(b1) / (std::exp(b0) + std::exp(b1));
  for (int trial = 0; trial < 10; ++trial) {
    const auto steps = random_steps(rng, 1 + trial, 3);
    for (double h : rnn_final_state(p, steps)) CHECK(std::abs(h) < 1e-20);
    CHECK(rnn_forward(p, steps)[1] == doctest::Approx(expect_live).epsilon(1e-12));
  }
}

TEST_CASE("scalar LSTM matches hand evaluation") {
  // D = H = 1: W = (wi, wf, wg, wo), U = (ui, uf, ug, uo), b, head (2x1), head bias.
  RnnParams p = RnnParams::zeros(CellKind::lstm, 1, 1);
  const double W[4] = {0.3, -0.2, 0.7, 0.5}, U[4] = {-0.4, 0.6, 0.1, 0.2}, B[4] = {0.1, 0.9, -0.3, 0.0};
  for (int g = 0; g < 4; ++g) {
    p.values[g] = W[g];
    p.values[4 + g] = U[g];
    p.values[8 + g] = B[g];
  }
  p.values[12] = -1.2;
  p.values[13] = 0.8;
  p.values[14] = 0.05;
  p.values[15] = -0.1;

  auto cell = [&](double x, double h, double c, double& hn, double& cn) {
    const double i = sig(W[0] * x + U[0] * h + B[0]);
    const double f = sig(W[1] * x + U[1] * h + B[1]);
    const double g = std::tanh(W[2] * x + U[2] * h + B[2]);
    const double o = sig(W[3] * x + U[3] * h + B[3]);
    cn = f * c + i * g;
    hn = o * std::tanh(cn);
  };
  auto live = [&](double h) {
    const double l0 = -1.2 * h + 0.05, l1 = 0.8 * h - 0.1;
    return std::exp(l1) / (std::exp(l0) + std::exp(l1));
  };

  double h1, c1;
  cell(1.5, 0.0, 0.0, h1, c1);
  CHECK(rnn_final_state(p, {{1.5}})[0] == doctest::Approx(h1).epsilon(1e-14));
  CHECK(rnn_forward(p, {{1.5}})[1] == doctest::Approx(live(h1)).epsilon(1e-14));

  double h2, c2;
  cell(-0.7, h1, c1, h2, c2);
  CHECK(rnn_forward(p, {{1.5}, {-0.7}})[1] == doctest::Approx(live(h2)).epsilon(1e-14));
  const auto pre = rnn_prefix_forward(p, {{1.5}, {-0.7}});
  CHECK(pre[0][1] == doctest::Approx(live(h1)).epsilon(1e-14));
  CHECK(pre[1][1] == doctest::Approx(live(h2)).epsilon(1e-14));
}

TEST_CASE("BiLSTM with tied directions is symmetric on palindromes") {
  auto p = random_params(CellKind::bilstm, 3, 5, 7);
  const std::size_t n = p.direction_size();
  std::copy(p.values.begin(), p.values.begin() + static_cast<std::ptrdiff_t>(n), p.values.begin() + static_cast<std::ptrdiff_t>(n));
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Steps s = random_steps(rng, 2 + trial % 4, 3);
    Steps pal = s;
    pal.insert(pal.end(), s.rbegin() + (trial % 2), s.rend());
    const auto st = rnn_final_state(p, pal);
    for (int k = 0; k < 5; ++k) CHECK(std::abs(st[k] - st[5 + k]) < 1e-9);
  }
}

TEST_CASE("dimension mismatch is an error") {
  const auto p = RnnParams::zeros(CellKind::gru, 4, 2);
  CHECK_THROWS_AS(rnn_forward(p, {{1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(rnn_forward(p, Steps{}), std::invalid_argument);
}

TEST_CASE("BPTT gradients match finite differences") {
  for (CellKind k : {CellKind::lstm, CellKind::bilstm, CellKind::gru}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto gc = gradient_check(k, 5, 4, 3, seed);
      INFO(to_string(k) << " seed " << seed << " rel " << gc.max_relative << " abs " << gc.max_absolute);
      CHECK(gc.max_relative < 1e-4);
      CHECK(gc.max_absolute < 1e-9);
    }
  }
}

TEST_CASE("model file round trip") {
  const fs::path p = fs::temp_directory_path() / "md_test.mdmw";
  for (CellKind k : {CellKind::lstm, CellKind::bilstm, CellKind::gru}) {
    const auto m = RnnParams::initial(k, 7, 3, 11);
    write_model(p, m);
    CHECK(read_model(p) == m);
    CHECK(fs::file_size(p) == 4 + 1 + 12 + 8 * m.size());
  }
  fs::resize_file(p, 30);
  CHECK_THROWS_AS(read_model(p), std::runtime_error);
  CHECK_THROWS_WITH_AS(read_model(fs::temp_directory_path() / "md_missing.mdmw"), doctest::Contains("md_missing"),
                       std::runtime_error);
  fs::remove(p);
}

TEST_CASE("training on a separable task") {
  const auto train = test::offset_sequences(200, 6, 4, 1.0, 10);
  const auto val = test::offset_sequences(100, 6, 4, 1.0, 11);
  TrainConfig cfg{.learning_rate = 3e-3, .batch_size = 16, .val_period = 10, .patience = 5, .max_iters = 400, .seed = 3};
  const auto r = train_rnn(train, val, CellKind::lstm, 6, cfg);
  REQUIRE(r.checks.size() >= 10);
  for (std::size_t i = 1; i < 10; ++i) CHECK(r.checks[i].train_loss < r.checks[i - 1].train_loss);
  CHECK(accuracy(r.params, val) >= 0.95);

  const auto again = train_rnn(train, val, CellKind::lstm, 6, cfg);
  CHECK(again.params == r.params);
  CHECK(again.iterations == r.iterations);
}

TEST_CASE("early stopping on a memorizable task") {
  const auto data = test::offset_sequences(40, 4, 3, 2.0, 12);
  TrainConfig cfg{.learning_rate = 0.05, .batch_size = 8, .val_period = 5, .patience = 3, .max_iters = 5000, .seed = 1};
  const auto r = train_rnn(data, data, CellKind::gru, 4, cfg);
  CHECK(r.stopped_early);
  CHECK(r.iterations < cfg.max_iters);
  CHECK(r.checks[static_cast<std::size_t>(r.best_check)].val_loss == doctest::Approx(mean_loss(r.params, data)));
}

TEST_CASE("training preconditions and divergence") {
  auto data = test::offset_sequences(20, 3, 2, 1.0, 13);
  const TrainConfig cfg{.max_iters = 5};
  std::vector<FeatureSequence> one_class;
  for (const auto& s : data)
    if (s.label == 1) one_class.push_back(s);
  CHECK_THROWS_AS(train_rnn(one_class, data, CellKind::gru, 2, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_rnn(data, {}, CellKind::gru, 2, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_rnn(data, data, CellKind::gru, 2, TrainConfig{.learning_rate = 0.0}), std::invalid_argument);
  for (auto& s : data) s.steps[0][0] = INFINITY;
  CHECK_THROWS_WITH_AS(train_rnn(data, data, CellKind::gru, 2, cfg), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("stacking plan") {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("v" + std::to_string(i));
  const auto plan = make_stacking_plan(ids, 5, default_pairing(), 42);
  for (int f = 0; f < 5; ++f) CHECK(plan.fold_members(f).size() == 20);
  for (std::size_t b = 0; b < 3; ++b) {
    for (int f = 0; f < 5; ++f) {
      const auto& tf = plan.training_folds[b][static_cast<std::size_t>(f)];
      CHECK(tf.size() == 4 - b);
      CHECK(std::find(tf.begin(), tf.end(), f) == tf.end());
    }
  }
  const auto same = make_stacking_plan(ids, 5, default_pairing(), 42);
  CHECK(same.fold == plan.fold);
  CHECK(same.training_folds == plan.training_folds);
  CHECK(make_stacking_plan(ids, 5, default_pairing(), 43).fold != plan.fold);
  CHECK_THROWS_AS(make_stacking_plan(ids, 3, default_pairing(), 1), std::invalid_argument);
  CHECK_THROWS_AS(make_stacking_plan({"a", "b"}, 5, default_pairing(), 1), std::invalid_argument);
}

TEST_CASE("out-of-fold meta dataset") {
  const auto train = test::complementary_videos(40, 4, 4, 20);
  const auto val = test::complementary_videos(15, 4, 4, 21);
  std::vector<std::string> ids;
  for (const auto& v : train) ids.push_back(v.video_id);
  auto bases = default_pairing();
  for (auto& b : bases) b.hidden = 3;
  const auto plan = make_stacking_plan(ids, 5, bases, 9);
  const TrainConfig cfg{.learning_rate = 0.01, .batch_size = 8, .val_period = 10, .max_iters = 40, .seed = 2};
  const MetaDataset meta = build_meta_dataset(plan, cfg, train, val);
  REQUIRE(meta.entries.size() == 40);
  CHECK(meta.dim() == 3);
  CHECK(meta.runs.size() == 15);
  for (const auto& e : meta.entries) {
    CHECK(e.steps.size() == 4);
    REQUIRE(e.producers.size() == 3);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& run = meta.runs[static_cast<std::size_t>(e.producers[b])];
      CHECK(run.base == static_cast<int>(b));
      CHECK(run.fold == plan.fold_of(e.video_id));
    }
  }
  CHECK(audit_leakage(meta, plan).empty());

  MetaDataset leaky = meta;
  const auto& e0 = leaky.entries[0];
  leaky.runs[static_cast<std::size_t>(e0.producers[1])].trained_on.push_back(e0.video_id);
  CHECK_FALSE(audit_leakage(leaky, plan).empty());

  const auto flat = build_meta_dataset(plan, cfg, train, val, true);
  for (const auto& e : flat.entries) CHECK(e.steps.size() == 1);
  // Flat values are the final-prefix values of the sequence mode.
  for (std::size_t i = 0; i < flat.entries.size(); ++i) CHECK(flat.entries[i].steps[0] == meta.entries[i].steps.back());
}

TEST_CASE("untrained meta model scores one half") {
  EnsembleBundle bundle;
  for (const auto& s : default_pairing())
    bundle.bases.push_back({{s.kind, s.subset, 2}, RnnParams::initial(s.kind, 4, 2, 1)});
  bundle.meta = RnnParams::zeros(CellKind::gru, 3, 100);
  for (const auto& v : test::complementary_videos(6, 4, 3, 5)) CHECK(predict(bundle, v) == 0.5);
}

TEST_CASE("meta model on identical base outputs tracks the base") {
  // Three copies of one noisy score per video: nothing to combine.
  auto make = [](int n, std::uint64_t seed, double& base_acc) {
    Rng rng(seed);
    std::vector<FeatureSequence> out;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      const int y = i % 2;
      const double q = sig(1.5 * (2 * y - 1) + rng.normal());
      correct += (q >= 0.5) == (y == 1) ? 1 : 0;
      out.push_back({"m" + std::to_string(i), y, "meta", Steps(3, std::vector<double>{q, q, q})});
    }
    base_acc = static_cast<double>(correct) / n;
    return out;
  };
  double a_tr, a_val, a_te;
  const auto tr = make(400, 1, a_tr), va = make(200, 2, a_val), te = make(2000, 3, a_te);
  const auto r = train_meta(tr, va, 8, {.learning_rate = 0.01, .batch_size = 32, .val_period = 20, .max_iters = 2000, .seed = 4});
  const double meta_acc = accuracy(r.params, te);
  MESSAGE("base " << a_te << " meta " << meta_acc);
  CHECK(std::abs(meta_acc - a_te) <= 0.01);
}

TEST_CASE("stacking complementary experts") {
  const auto train = test::complementary_videos(150, 4, 4, 30);
  const auto val = test::complementary_videos(60, 4, 4, 31);
  const auto held = test::complementary_videos(300, 4, 4, 32);
  std::vector<std::string> ids;
  for (const auto& v : train) ids.push_back(v.video_id);
  auto bases = default_pairing();
  for (auto& b : bases) b.hidden = 6;
  const auto plan = make_stacking_plan(ids, 5, bases, 3);
  StackingConfig cfg;
  cfg.base_train = {.learning_rate = 0.01, .batch_size = 16, .val_period = 10, .max_iters = 600, .seed = 5};
  cfg.meta_train = {.learning_rate = 0.01, .batch_size = 16, .val_period = 10, .max_iters = 1500, .seed = 6};
  cfg.meta_hidden = 8;
  const auto trained = train_ensemble(plan, cfg, train, val);
  CHECK(audit_leakage(trained.meta, plan).empty());

  int meta_ok = 0;
  std::vector<int> base_ok(3, 0);
  for (const auto& v : held) {
    meta_ok += (predict(trained.bundle, v) >= 0.5) == (v.label == 1) ? 1 : 0;
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& m = trained.bundle.bases[b];
      base_ok[b] += (rnn_forward(m.params, v.sequence(m.spec.subset).steps)[1] >= 0.5) == (v.label == 1) ? 1 : 0;
    }
  }
  MESSAGE("meta " << meta_ok << " bases " << base_ok[0] << " " << base_ok[1] << " " << base_ok[2] << " of " << held.size());
  for (int b : base_ok) CHECK(meta_ok > b);

  const fs::path dir = fs::temp_directory_path() / "md_test_bundle";
  fs::remove_all(dir);
  save_bundle(dir, trained.bundle);
  const auto loaded = load_bundle(dir);
  for (std::size_t i = 0; i < 10; ++i) CHECK(predict(loaded, held[i]) == predict(trained.bundle, held[i]));
  fs::remove(dir / "meta.mdmw");
  CHECK_THROWS_WITH_AS(load_bundle(dir), doctest::Contains("meta.mdmw"), std::runtime_error);
  fs::remove_all(dir);
}
