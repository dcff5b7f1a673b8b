#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "firn/chebyshev.hpp"
#include "firn/types.hpp"

namespace firn {

enum class ModelKind { GcnLstm, Gcn, Lstm };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::GcnLstm;
  int in_channels = 3;
  int hidden = 64;
  int dense = 32;
  int outputs = kTargetYears;
  int cheb_order = 3;
  /// Sequence length; only constrains the input when `stacked` is set.
  int steps = kFeatureYears;
  /// One distinct cell per time step instead of one shared cell.
  bool stacked = false;
  double dropout = 0.2;
  /// Fixed output affine: prediction = target_mean + target_scale * dense
  /// output. Fitted on training targets so the head works in unit scale.
  double target_mean = 0.0;
  double target_scale = 1.0;

  bool operator==(const ModelConfig&) const = default;
};

/// Full-size configuration: 3 input channels for the recurrent models, 12 for
/// the single-graph baseline; the LSTM baseline has no graph (order 1).
ModelConfig default_model_config(ModelKind kind, int cheb_order = 3);

/// Gate blocks are laid out column-wise as [input | forget | cell | output].
struct CellParams {
  Matrix theta_x;   // (K * in) x 4H
  Matrix theta_h;   // (K * H) x 4H
  Matrix bias;      // 1 x 4H
  Matrix peephole;  // 3 x H, rows: input, forget, output
};

struct ConvParams {
  Matrix theta;  // (K * in) x H
  Matrix bias;   // 1 x H
};

struct HeadParams {
  Matrix w1;  // H x dense
  Matrix b1;
  Matrix w2;  // dense x outputs
  Matrix b2;
};

struct Parameters {
  ModelConfig config;
  std::vector<CellParams> cells;
  ConvParams conv;
  HeadParams head;

  /// Visits every learnable tensor with a stable name, in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto p = "cell" + std::to_string(i) + ".";
      f(p + "theta_x", cells[i].theta_x);
      f(p + "theta_h", cells[i].theta_h);
      f(p + "bias", cells[i].bias);
      f(p + "peephole", cells[i].peephole);
    }
    if (config.kind == ModelKind::Gcn) {
      f(std::string("conv.theta"), conv.theta);
      f(std::string("conv.bias"), conv.bias);
    }
    f(std::string("head.w1"), head.w1);
    f(std::string("head.b1"), head.b1);
    f(std::string("head.w2"), head.w2);
    f(std::string("head.b2"), head.b2);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<Parameters&>(*this).for_each([&](const std::string& name, Matrix& m) {
      f(name, static_cast<const Matrix&>(m));
    });
  }

  std::size_t size() const;
  Parameters zeros_like() const;
  void set_zero();
};

/// Filters uniform in +-sqrt(1 / (K * fan_in)); biases and peepholes zero.
Parameters initialize_parameters(const ModelConfig& config, std::uint64_t seed);

struct CellState {
  Matrix h;
  Matrix c;
};

/// One peephole graph-convolutional LSTM step. `laplacian` may be null when
/// the configured order is 1.
CellState gconv_lstm_step(const Matrix& x, const CellState& state, const Matrix* laplacian,
                          const CellParams& params, int cheb_order);

inline double hardswish(double x) { return x * std::min(std::max(x + 3.0, 0.0), 6.0) / 6.0; }
inline double hardswish_grad(double x) {
  if (x <= -3.0) return 0.0;
  if (x >= 3.0) return 1.0;
  return (2.0 * x + 3.0) / 6.0;
}

/// Feature steps of one sample and the scaled Laplacian of its graph.
struct ModelInput {
  std::span<const Matrix> steps;
  const Matrix* laplacian = nullptr;
};

/// Counter-based dropout stream coordinates.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t sample = 0;
};

struct ForwardOptions {
  bool training = false;
  DropoutKey dropout_key;
};

/// Inverted-dropout mask: entries are 0 or 1 / (1 - p).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, const DropoutKey& key);

/// Dispatches on `params.config.kind`.
Matrix forward(const Parameters& params, const ModelInput& input, const ForwardOptions& options = {});

Matrix forward_gcn_lstm(const Parameters& params, std::span<const Matrix> features, const Matrix& laplacian,
                        const ForwardOptions& options = {});
Matrix forward_gcn_baseline(const Parameters& params, const Matrix& features, const Matrix& laplacian,
                            const ForwardOptions& options = {});
Matrix forward_lstm_baseline(const Parameters& params, std::span<const Matrix> features,
                             const ForwardOptions& options = {});

double mse_loss(const Matrix& pred, const Matrix& target);

/// Runs forward and reverse passes with one dropout mask; adds the gradient of
/// the MSE loss into `grad` and returns the loss.
double loss_and_gradient(const Parameters& params, const ModelInput& input, const Matrix& target,
                         const ForwardOptions& options, Parameters& grad);

}  // namespace firn
