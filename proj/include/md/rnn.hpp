#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "md/embedding.hpp"

namespace md {

enum class CellKind : std::uint8_t { lstm = 0, bilstm = 1, gru = 2 };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(const std::string& name);  // "lstm", "bilstm", "gru"

using Steps = std::vector<std::vector<double>>;

// Recurrent classifier weights, one flat vector. Layout, for each direction
// (one, or two for BiLSTM: forward then backward):
//   W  (G*H x D) row-major, U (G*H x H) row-major, b (G*H)
// then the head Wo (2 x F) row-major and bo (2), where G = 4 for LSTM gates
// (i, f, g, o) and 3 for GRU gates (z, r, n), and F = directions * H.
// Logit 1 is the live class.
struct RnnParams {
  CellKind kind = CellKind::lstm;
  int input_dim = 0;
  int hidden = 0;
  std::vector<double> values;

  int gates() const { return kind == CellKind::gru ? 3 : 4; }
  int directions() const { return kind == CellKind::bilstm ? 2 : 1; }
  int head_inputs() const { return directions() * hidden; }
  std::size_t direction_size() const;
  std::size_t head_offset() const { return directions() * direction_size(); }
  std::size_t size() const { return head_offset() + 2 * static_cast<std::size_t>(head_inputs()) + 2; }

  // All zeros.
  static RnnParams zeros(CellKind kind, int input_dim, int hidden);
  // Weights uniform in +-1/sqrt(fan), biases zero except LSTM forget gates (1).
  static RnnParams initial(CellKind kind, int input_dim, int hidden, std::uint64_t seed);

  void validate() const;  // shapes and finiteness; throws std::invalid_argument
};

bool operator==(const RnnParams& a, const RnnParams& b);

// (p_attack, p_live) for the whole sequence.
std::array<double, 2> rnn_forward(const RnnParams& p, const Steps& steps);
// Final hidden state fed to the head (forward then backward half for BiLSTM).
std::vector<double> rnn_final_state(const RnnParams& p, const Steps& steps);
// Probabilities after each prefix steps[0..t].
std::vector<std::array<double, 2>> rnn_prefix_forward(const RnnParams& p, const Steps& steps);

// Cross-entropy loss of one sequence; adds d loss / d values into grad
// (which must have p.size() entries).
double rnn_loss_gradient(const RnnParams& p, const Steps& steps, int label, std::span<double> grad);
double rnn_loss(const RnnParams& p, const Steps& steps, int label);

// Analytic gradients against central differences (h = 1e-5) on a random
// instance. max_relative is the largest |a - n| / max(|a|, |n|, 1e-6); the
// floor sits where difference-quotient roundoff (about 1e-11 here) stops
// resolving relative error, and max_absolute covers the entries below it.
struct GradientCheck {
  double max_relative = 0.0;
  double max_absolute = 0.0;
};
GradientCheck gradient_check(CellKind kind, int input_dim, int hidden, int steps, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int val_period = 30;  // iterations between validation checks
  int patience = 5;     // checks without improvement before stopping
  double min_delta = 1e-4;  // validation loss must drop by more than this to count
  int max_iters = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainCheck {
  int iteration = 0;
  double train_loss = 0.0;  // mean over the whole training set
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  RnnParams params;  // best validation loss seen
  std::vector<TrainCheck> checks;
  int iterations = 0;
  bool stopped_early = false;
  int best_check = -1;
};

// Mini-batch Adam on mean cross entropy with full backpropagation through
// time. Throws std::invalid_argument on bad input (empty split, one class in
// train, dimension mismatch) and std::runtime_error on a non-finite loss.
TrainResult train_rnn(const std::vector<FeatureSequence>& train, const std::vector<FeatureSequence>& val,
                      CellKind kind, int hidden, const TrainConfig& cfg);

double mean_loss(const RnnParams& p, const std::vector<FeatureSequence>& seqs);
double accuracy(const RnnParams& p, const std::vector<FeatureSequence>& seqs);  // live iff p_live >= 0.5

// MDMW: magic, u8 kind, u32 input_dim, u32 hidden, u32 count, count f64 values.
void write_model(const std::filesystem::path& path, const RnnParams& p);
RnnParams read_model(const std::filesystem::path& path);

}  // namespace md
