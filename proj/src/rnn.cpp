#include "md/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "md/binio.hpp"
#include "md/kernels.hpp"
#include "md/rng.hpp"

namespace md {
namespace {

namespace kp = kernels::parallel;
using Vec = std::vector<double>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Offsets of one direction's blocks inside the flat parameter vector.
struct Block {
  std::size_t w, u, b;
  std::size_t rows;  // G * H
};

Block block(const RnnParams& p, int dir) {
  const std::size_t base = static_cast<std::size_t>(dir) * p.direction_size();
  const std::size_t rows = static_cast<std::size_t>(p.gates()) * p.hidden;
  return {base, base + rows * p.input_dim, base + rows * (p.input_dim + p.hidden), rows};
}

std::span<const double> view(const Vec& v, std::size_t off, std::size_t n) { return {v.data() + off, n}; }
std::span<double> view(std::span<double> v, std::size_t off, std::size_t n) { return v.subspan(off, n); }

// Per-step activations kept for backpropagation. h[0] / c[0] are the zero
// initial state; act[t] holds the post-nonlinearity gate values.
struct Trace {
  std::vector<Vec> h, c, act, rh;
};

void check_steps(const RnnParams& p, const Steps& steps) {
  if (steps.empty()) throw std::invalid_argument("rnn: empty sequence");
  for (const auto& x : steps) {
    if (x.size() != static_cast<std::size_t>(p.input_dim))
      throw std::invalid_argument("rnn: step dim " + std::to_string(x.size()) + " != model input dim " +
                                  std::to_string(p.input_dim));
  }
}

// Runs one direction over steps in the given order (reverse for BiLSTM's second pass).
Trace run_direction(const RnnParams& p, int dir, const Steps& steps, bool reverse) {
  const Block bl = block(p, dir);
  const std::size_t H = static_cast<std::size_t>(p.hidden), D = static_cast<std::size_t>(p.input_dim);
  const auto& v = p.values;
  const std::size_t T = steps.size();
  Trace tr;
  tr.h.assign(1, Vec(H, 0.0));
  tr.c.assign(1, Vec(H, 0.0));
  Vec a1(bl.rows), a(bl.rows);
  for (std::size_t s = 0; s < T; ++s) {
    const Vec& x = steps[reverse ? T - 1 - s : s];
    const Vec& hp = tr.h.back();
    kp::affine(view(v, bl.w, bl.rows * D), view(v, bl.b, bl.rows), x, a1);
    Vec hn(H);
    if (p.kind == CellKind::gru) {
      // z, r from W x + U h + b; n from W x + U_n (r * h) + b_n
      kp::affine(view(v, bl.u, 2 * H * H), std::span<const double>(a1.data(), 2 * H), hp,
                 std::span<double>(a.data(), 2 * H));
      Vec act(3 * H), rh(H);
      for (std::size_t k = 0; k < H; ++k) {
        act[k] = sigmoid(a[k]);
        act[H + k] = sigmoid(a[H + k]);
        rh[k] = act[H + k] * hp[k];
      }
      kp::affine(view(v, bl.u + 2 * H * H, H * H), std::span<const double>(a1.data() + 2 * H, H), rh,
                 std::span<double>(a.data() + 2 * H, H));
      for (std::size_t k = 0; k < H; ++k) {
        act[2 * H + k] = std::tanh(a[2 * H + k]);
        hn[k] = act[k] * hp[k] + (1.0 - act[k]) * act[2 * H + k];
      }
      tr.act.push_back(std::move(act));
      tr.rh.push_back(std::move(rh));
      tr.c.push_back({});
    } else {
      kp::affine(view(v, bl.u, bl.rows * H), a1, hp, a);
      Vec act(4 * H), cn(H);
      const Vec& cp = tr.c.back();
      for (std::size_t k = 0; k < H; ++k) {
        act[k] = sigmoid(a[k]);
        act[H + k] = sigmoid(a[H + k]);
        act[2 * H + k] = std::tanh(a[2 * H + k]);
        act[3 * H + k] = sigmoid(a[3 * H + k]);
        cn[k] = act[H + k] * cp[k] + act[k] * act[2 * H + k];
        hn[k] = act[3 * H + k] * std::tanh(cn[k]);
      }
      tr.act.push_back(std::move(act));
      tr.c.push_back(std::move(cn));
    }
    tr.h.push_back(std::move(hn));
  }
  return tr;
}

// Backpropagates dh (gradient w.r.t. the final hidden state) through one direction.
void backprop_direction(const RnnParams& p, int dir, const Steps& steps, bool reverse, const Trace& tr, Vec dh,
                        std::span<double> grad) {
  const Block bl = block(p, dir);
  const std::size_t H = static_cast<std::size_t>(p.hidden), D = static_cast<std::size_t>(p.input_dim);
  const auto& v = p.values;
  const std::size_t T = steps.size();
  auto gW = view(grad, bl.w, bl.rows * D);
  auto gU = view(grad, bl.u, bl.rows * H);
  auto gb = view(grad, bl.b, bl.rows);
  Vec da(bl.rows), dc(H, 0.0), dh_prev(H);
  for (std::size_t s = T; s-- > 0;) {
    const Vec& x = steps[reverse ? T - 1 - s : s];
    const Vec& act = tr.act[s];
    const Vec& hp = tr.h[s];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    if (p.kind == CellKind::gru) {
      Vec drh(H, 0.0);
      for (std::size_t k = 0; k < H; ++k) {
        const double z = act[k], n = act[2 * H + k];
        const double dz = dh[k] * (hp[k] - n);
        const double dn = dh[k] * (1.0 - z);
        dh_prev[k] = dh[k] * z;
        da[k] = dz * z * (1.0 - z);
        da[2 * H + k] = dn * (1.0 - n * n);
      }
      const std::span<const double> dan(da.data() + 2 * H, H);
      kp::outer_accumulate(dan, tr.rh[s], gU.subspan(2 * H * H, H * H));
      kp::transposed_accumulate(view(v, bl.u + 2 * H * H, H * H), dan, drh);
      for (std::size_t k = 0; k < H; ++k) {
        const double r = act[H + k];
        dh_prev[k] += drh[k] * r;
        da[H + k] = drh[k] * hp[k] * r * (1.0 - r);
      }
      const std::span<const double> dzr(da.data(), 2 * H);
      kp::outer_accumulate(dzr, hp, gU.subspan(0, 2 * H * H));
      kp::transposed_accumulate(view(v, bl.u, 2 * H * H), dzr, dh_prev);
    } else {
      const Vec& cp = tr.c[s];
      const Vec& c = tr.c[s + 1];
      for (std::size_t k = 0; k < H; ++k) {
        const double i = act[k], f = act[H + k], g = act[2 * H + k], o = act[3 * H + k];
        const double tc = std::tanh(c[k]);
        const double dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
        da[k] = dck * g * i * (1.0 - i);
        da[H + k] = dck * cp[k] * f * (1.0 - f);
        da[2 * H + k] = dck * i * (1.0 - g * g);
        da[3 * H + k] = dh[k] * tc * o * (1.0 - o);
        dc[k] = dck * f;
      }
      kp::outer_accumulate(da, hp, gU);
      kp::transposed_accumulate(view(v, bl.u, bl.rows * H), da, dh_prev);
    }
    kp::outer_accumulate(da, x, gW);
    for (std::size_t r = 0; r < bl.rows; ++r) gb[r] += da[r];
    std::swap(dh, dh_prev);
  }
}

struct HeadOut {
  Vec features;  // concatenated final hidden states
  std::array<double, 2> logits{}, probs{};
};

HeadOut head(const RnnParams& p, Vec features) {
  HeadOut out;
  out.features = std::move(features);
  const std::size_t F = out.features.size();
  const std::size_t off = p.head_offset();
  for (int k = 0; k < 2; ++k) {
    double acc = p.values[off + 2 * F + k];
    for (std::size_t j = 0; j < F; ++j) acc += p.values[off + k * F + j] * out.features[j];
    out.logits[k] = acc;
  }
  const double m = std::max(out.logits[0], out.logits[1]);
  const double e0 = std::exp(out.logits[0] - m), e1 = std::exp(out.logits[1] - m);
  out.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return out;
}

Vec concat_final(const Trace& fwd, const Trace* bwd) {
  Vec f = fwd.h.back();
  if (bwd) f.insert(f.end(), bwd->h.back().begin(), bwd->h.back().end());
  return f;
}

double cross_entropy(const HeadOut& h, int label) {
  const double m = std::max(h.logits[0], h.logits[1]);
  const double lse = m + std::log(std::exp(h.logits[0] - m) + std::exp(h.logits[1] - m));
  return lse - h.logits[label];
}

void check_label(int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("rnn: label must be 0 or 1");
}

}  // namespace

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::lstm: return "lstm";
    case CellKind::bilstm: return "bilstm";
    case CellKind::gru: return "gru";
  }
  return "?";
}

CellKind parse_cell_kind(const std::string& name) {
  if (name == "lstm") return CellKind::lstm;
  if (name == "bilstm") return CellKind::bilstm;
  if (name == "gru") return CellKind::gru;
  throw std::invalid_argument("unknown cell kind '" + name + "'");
}

std::size_t RnnParams::direction_size() const {
  return static_cast<std::size_t>(gates()) * hidden * (input_dim + hidden + 1);
}

RnnParams RnnParams::zeros(CellKind kind, int input_dim, int hidden) {
  if (input_dim < 1 || hidden < 1) throw std::invalid_argument("rnn: dims must be >= 1");
  RnnParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.values.assign(p.size(), 0.0);
  return p;
}

RnnParams RnnParams::initial(CellKind kind, int input_dim, int hidden, std::uint64_t seed) {
  RnnParams p = zeros(kind, input_dim, hidden);
  Rng rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  const std::size_t H = static_cast<std::size_t>(hidden);
  for (int d = 0; d < p.directions(); ++d) {
    const Block bl = block(p, d);
    for (std::size_t i = bl.w; i < bl.b; ++i) p.values[i] = rng.uniform(-k, k);
    if (kind != CellKind::gru)
      for (std::size_t j = 0; j < H; ++j) p.values[bl.b + H + j] = 1.0;
  }
  const double kh = 1.0 / std::sqrt(static_cast<double>(p.head_inputs()));
  const std::size_t off = p.head_offset();
  for (std::size_t i = off; i < off + 2 * static_cast<std::size_t>(p.head_inputs()); ++i) p.values[i] = rng.uniform(-kh, kh);
  return p;
}

void RnnParams::validate() const {
  if (input_dim < 1 || hidden < 1) throw std::invalid_argument("rnn: dims must be >= 1");
  if (values.size() != size())
    throw std::invalid_argument("rnn: expected " + std::to_string(size()) + " parameters, got " +
                                std::to_string(values.size()));
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("rnn: non-finite parameter");
  }
}

bool operator==(const RnnParams& a, const RnnParams& b) {
  return a.kind == b.kind && a.input_dim == b.input_dim && a.hidden == b.hidden && a.values == b.values;
}

std::array<double, 2> rnn_forward(const RnnParams& p, const Steps& steps) {
  check_steps(p, steps);
  const Trace f = run_direction(p, 0, steps, false);
  if (p.kind != CellKind::bilstm) return head(p, concat_final(f, nullptr)).probs;
  const Trace b = run_direction(p, 1, steps, true);
  return head(p, concat_final(f, &b)).probs;
}

std::vector<double> rnn_final_state(const RnnParams& p, const Steps& steps) {
  check_steps(p, steps);
  const Trace f = run_direction(p, 0, steps, false);
  if (p.kind != CellKind::bilstm) return concat_final(f, nullptr);
  const Trace b = run_direction(p, 1, steps, true);
  return concat_final(f, &b);
}

std::vector<std::array<double, 2>> rnn_prefix_forward(const RnnParams& p, const Steps& steps) {
  check_steps(p, steps);
  std::vector<std::array<double, 2>> out;
  const Trace f = run_direction(p, 0, steps, false);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    Vec feat = f.h[t + 1];
    if (p.kind == CellKind::bilstm) {
      const Steps prefix(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(t + 1));
      const Trace b = run_direction(p, 1, prefix, true);
      feat.insert(feat.end(), b.h.back().begin(), b.h.back().end());
    }
    out.push_back(head(p, std::move(feat)).probs);
  }
  return out;
}

double rnn_loss(const RnnParams& p, const Steps& steps, int label) {
  check_label(label);
  check_steps(p, steps);
  const Trace f = run_direction(p, 0, steps, false);
  if (p.kind != CellKind::bilstm) return cross_entropy(head(p, concat_final(f, nullptr)), label);
  const Trace b = run_direction(p, 1, steps, true);
  return cross_entropy(head(p, concat_final(f, &b)), label);
}

double rnn_loss_gradient(const RnnParams& p, const Steps& steps, int label, std::span<double> grad) {
  check_label(label);
  check_steps(p, steps);
  if (grad.size() != p.size()) throw std::invalid_argument("rnn: gradient buffer has wrong size");
  const bool bi = p.kind == CellKind::bilstm;
  const Trace f = run_direction(p, 0, steps, false);
  Trace b;
  if (bi) b = run_direction(p, 1, steps, true);
  const HeadOut h = head(p, concat_final(f, bi ? &b : nullptr));

  const std::size_t F = h.features.size(), H = static_cast<std::size_t>(p.hidden);
  const std::size_t off = p.head_offset();
  const double dl[2] = {h.probs[0] - (label == 0 ? 1.0 : 0.0), h.probs[1] - (label == 1 ? 1.0 : 0.0)};
  Vec dfeat(F, 0.0);
  for (int k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < F; ++j) {
      grad[off + k * F + j] += dl[k] * h.features[j];
      dfeat[j] += p.values[off + k * F + j] * dl[k];
    }
    grad[off + 2 * F + k] += dl[k];
  }
  backprop_direction(p, 0, steps, false, f, Vec(dfeat.begin(), dfeat.begin() + static_cast<std::ptrdiff_t>(H)), grad);
  if (bi) backprop_direction(p, 1, steps, true, b, Vec(dfeat.begin() + static_cast<std::ptrdiff_t>(H), dfeat.end()), grad);
  return cross_entropy(h, label);
}

GradientCheck gradient_check(CellKind kind, int input_dim, int hidden, int steps, std::uint64_t seed) {
  Rng rng(seed);
  RnnParams p = RnnParams::zeros(kind, input_dim, hidden);
  for (double& v : p.values) v = rng.uniform(-0.5, 0.5);
  Steps xs(static_cast<std::size_t>(steps), Vec(static_cast<std::size_t>(input_dim)));
  for (auto& x : xs)
    for (double& v : x) v = rng.normal();
  const int label = static_cast<int>(rng.index(2));

  Vec grad(p.size(), 0.0);
  rnn_loss_gradient(p, xs, label, grad);
  const double h = 1e-5;
  GradientCheck worst;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double up = rnn_loss(p, xs, label);
    p.values[i] = keep - h;
    const double down = rnn_loss(p, xs, label);
    p.values[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(grad[i] - numeric);
    worst.max_absolute = std::max(worst.max_absolute, diff);
    worst.max_relative = std::max(worst.max_relative, diff / std::max({std::abs(grad[i]), std::abs(numeric), 1e-6}));
  }
  return worst;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (val_period < 1) throw std::invalid_argument("train: validation period must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("train: max iterations must be >= 1");
  if (!(min_delta >= 0.0)) throw std::invalid_argument("train: min_delta must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw std::invalid_argument("train: bad Adam constants");
}

double mean_loss(const RnnParams& p, const std::vector<FeatureSequence>& seqs) {
  double total = 0.0;
  for (const auto& s : seqs) total += rnn_loss(p, s.steps, s.label);
  return seqs.empty() ? 0.0 : total / static_cast<double>(seqs.size());
}

double accuracy(const RnnParams& p, const std::vector<FeatureSequence>& seqs) {
  int correct = 0;
  for (const auto& s : seqs) {
    const int pred = rnn_forward(p, s.steps)[1] >= 0.5 ? 1 : 0;
    correct += pred == s.label ? 1 : 0;
  }
  return seqs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(seqs.size());
}

TrainResult train_rnn(const std::vector<FeatureSequence>& train, const std::vector<FeatureSequence>& val,
                      CellKind kind, int hidden, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || val.empty()) throw std::invalid_argument("train: training and validation sets must be nonempty");
  const std::size_t dim = train.front().dim();
  bool has[2] = {false, false};
  for (const auto* set : {&train, &val}) {
    for (const auto& s : *set) {
      s.validate();
      if (s.dim() != dim) throw std::invalid_argument("train: sequence " + s.video_id + " has mismatched dim");
    }
  }
  for (const auto& s : train) has[s.label] = true;
  if (!has[0] || !has[1]) throw std::invalid_argument("train: training set needs both classes");

  TrainResult res;
  RnnParams p = RnnParams::initial(kind, static_cast<int>(dim), hidden, derive_seed(cfg.seed, 1));
  Rng order_rng(derive_seed(cfg.seed, 2));
  const std::size_t n = p.size();
  Vec grad(n), m(n, 0.0), v(n, 0.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  double b1t = 1.0, b2t = 1.0;

  auto check = [&](int iter) {
    TrainCheck c;
    c.iteration = iter;
    c.train_loss = mean_loss(p, train);
    c.val_loss = mean_loss(p, val);
    c.val_accuracy = accuracy(p, val);
    if (!std::isfinite(c.train_loss) || !std::isfinite(c.val_loss))
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
    res.checks.push_back(c);
    if (c.val_loss < best - cfg.min_delta) {
      best = c.val_loss;
      bad = 0;
      res.params = p;
      res.best_check = static_cast<int>(res.checks.size()) - 1;
    } else {
      ++bad;
    }
  };

  int iter = 0;
  while (iter < cfg.max_iters) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::size_t count = 0;
    for (int k = 0; k < cfg.batch_size; ++k) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const FeatureSequence& s = train[order[cursor++]];
      loss += rnn_loss_gradient(p, s.steps, s.label, grad);
      ++count;
    }
    loss /= static_cast<double>(count);
    ++iter;
    if (!std::isfinite(loss)) throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
    const double scale = 1.0 / static_cast<double>(count);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mh = m[i] / (1.0 - b1t), vh = v[i] / (1.0 - b2t);
      p.values[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
    if (iter % cfg.val_period == 0) {
      check(iter);
      if (bad >= cfg.patience) {
        res.stopped_early = iter < cfg.max_iters;
        break;
      }
    }
  }
  if (res.checks.empty() || res.checks.back().iteration != iter) check(iter);
  res.iterations = iter;
  return res;
}

void write_model(const std::filesystem::path& path, const RnnParams& p) {
  p.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  binio::put_magic(out, "MDMW");
  binio::put_u8(out, static_cast<std::uint8_t>(p.kind));
  binio::put_u32(out, static_cast<std::uint32_t>(p.input_dim));
  binio::put_u32(out, static_cast<std::uint32_t>(p.hidden));
  binio::put_u32(out, static_cast<std::uint32_t>(p.values.size()));
  for (double v : p.values) binio::put_f64(out, v);
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

RnnParams read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open model file");
  binio::Reader r(in, path);
  r.expect_magic("MDMW");
  const std::uint8_t kind = r.u8();
  if (kind > 2) r.fail("unknown cell kind byte " + std::to_string(kind));
  RnnParams p;
  p.kind = static_cast<CellKind>(kind);
  p.input_dim = static_cast<int>(r.u32());
  p.hidden = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  if (p.input_dim < 1 || p.hidden < 1 || count != p.size()) r.fail("inconsistent model dimensions");
  p.values.resize(count);
  for (double& v : p.values) v = r.f64();
  if (!r.at_end()) r.fail("trailing bytes");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return p;
}

}  // namespace md
