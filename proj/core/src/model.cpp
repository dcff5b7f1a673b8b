#include "firn/model.hpp"

#include <cmath>

#include "firn/error.hpp"
#include "firn/random.hpp"

namespace firn {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::GcnLstm: return "gcn_lstm";
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Lstm: return "lstm";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gcn_lstm") return ModelKind::GcnLstm;
  if (name == "gcn") return ModelKind::Gcn;
  if (name == "lstm") return ModelKind::Lstm;
  throw Error(ErrorKind::Config, "unknown model kind '" + std::string(name) + "' (gcn_lstm, gcn, lstm)");
}

ModelConfig default_model_config(ModelKind kind, int cheb_order) {
  ModelConfig c;
  c.kind = kind;
  c.cheb_order = cheb_order;
  switch (kind) {
    case ModelKind::GcnLstm: c.in_channels = 3; break;
    case ModelKind::Gcn: c.in_channels = 2 + kFeatureYears; break;
    case ModelKind::Lstm:
      c.in_channels = 3;
      c.cheb_order = 1;
      break;
  }
  return c;
}

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.set_zero();
  return z;
}

void Parameters::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

namespace {

void check_config(const ModelConfig& c) {
  if (c.cheb_order < 1 || c.hidden < 1 || c.dense < 1 || c.outputs < 1 || c.in_channels < 1 || c.steps < 1)
    throw Error(ErrorKind::Config, "model dimensions must be positive");
  if (c.kind == ModelKind::Lstm && c.cheb_order != 1)
    throw Error(ErrorKind::Config, "the LSTM baseline has no graph; Chebyshev order must be 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw Error(ErrorKind::Config, "dropout must lie in [0, 1)");
  if (!(c.target_scale > 0.0) || !std::isfinite(c.target_mean))
    throw Error(ErrorKind::Config, "target scale must be positive and the target mean finite");
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

Parameters initialize_parameters(const ModelConfig& config, std::uint64_t seed) {
  check_config(config);
  Rng rng(derive_seed({seed, 0x494e4954ULL}));
  const int k = config.cheb_order;
  const int h = config.hidden;
  Parameters p;
  p.config = config;
  if (config.kind != ModelKind::Gcn) {
    const int n_cells = config.stacked ? config.steps : 1;
    for (int i = 0; i < n_cells; ++i) {
      CellParams cell;
      cell.theta_x = uniform_matrix(k * config.in_channels, 4 * h, std::sqrt(1.0 / (k * config.in_channels)), rng);
      cell.theta_h = uniform_matrix(k * h, 4 * h, std::sqrt(1.0 / (k * h)), rng);
      cell.bias = Matrix::Zero(1, 4 * h);
      cell.peephole = Matrix::Zero(3, h);
      p.cells.push_back(std::move(cell));
    }
  } else {
    p.conv.theta = uniform_matrix(k * config.in_channels, h, std::sqrt(1.0 / (k * config.in_channels)), rng);
    p.conv.bias = Matrix::Zero(1, h);
  }
  p.head.w1 = uniform_matrix(h, config.dense, std::sqrt(1.0 / h), rng);
  p.head.b1 = Matrix::Zero(1, config.dense);
  p.head.w2 = uniform_matrix(config.dense, config.outputs, std::sqrt(1.0 / config.dense), rng);
  p.head.b2 = Matrix::Zero(1, config.outputs);
  return p;
}

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

// Eigen only vectorizes exp for doubles; std::tanh per element costs more
// than the Chebyshev products of a step.
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& a) { return 2.0 / (1.0 + (-2.0 * a).exp()) - 1.0; }

/// Cached activations of one recurrent step.
struct StepTape {
  Matrix zx;
  Matrix zh;
  Matrix c_prev;
  Eigen::ArrayXXd i, f, g, o;
  Matrix c;
  Eigen::ArrayXXd tanh_c;
};

struct HeadTape {
  Matrix h;    // head input (pre-activation)
  Matrix z0;   // hardswish(h)
  Matrix a1;   // z0 W1 + b1
  Matrix mask; // empty when dropout inactive
  Matrix z1;   // dropout(hardswish(a1))
};

struct Tape {
  std::vector<StepTape> steps;
  Matrix conv_basis;
  HeadTape head;
};

void check_step_shapes(const Matrix& x, const Matrix* laplacian, const ModelConfig& c, Eigen::Index n) {
  if (x.cols() != c.in_channels)
    throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.cols()) + " channels, model expects " +
                                              std::to_string(c.in_channels));
  if (x.rows() != n)
    throw Error(ErrorKind::ShapeMismatch, "time steps disagree on node count (" + std::to_string(x.rows()) +
                                              " vs " + std::to_string(n) + ")");
  if (c.cheb_order > 1 && (laplacian == nullptr || laplacian->rows() != n || laplacian->cols() != n))
    throw Error(ErrorKind::ShapeMismatch, "Laplacian missing or not " + std::to_string(n) + "x" + std::to_string(n));
}

CellState cell_forward(const Matrix& x, const CellState& s, const Matrix* lap, const CellParams& p, int order,
                       StepTape* tape) {
  const auto h = p.peephole.cols();
  Matrix zx = chebyshev_basis(lap, x, order);
  if (zx.cols() != p.theta_x.rows() || s.h.cols() * order != p.theta_h.rows())
    throw Error(ErrorKind::ShapeMismatch, "cell filter shapes do not match input width");
  Matrix pre(x.rows(), 4 * h);
  pre.noalias() = zx * p.theta_x;
  // The initial hidden state is exactly zero, so its products vanish.
  const bool zero_hidden = s.h.isZero(0.0);
  Matrix zh;
  if (!zero_hidden) {
    zh = chebyshev_basis(lap, s.h, order);
    pre.noalias() += zh * p.theta_h;
  }
  pre.rowwise() += p.bias.row(0);

  const Eigen::ArrayXXd c_prev = s.c.array();
  Eigen::ArrayXXd a_i = pre.leftCols(h).array() + c_prev.rowwise() * p.peephole.row(0).array();
  Eigen::ArrayXXd a_f = pre.middleCols(h, h).array() + c_prev.rowwise() * p.peephole.row(1).array();
  Eigen::ArrayXXd i = sigmoid(a_i);
  Eigen::ArrayXXd f = sigmoid(a_f);
  Eigen::ArrayXXd g = fast_tanh(pre.middleCols(2 * h, h).array());
  Eigen::ArrayXXd c = f * c_prev + i * g;
  Eigen::ArrayXXd a_o = pre.rightCols(h).array() + c.rowwise() * p.peephole.row(2).array();
  Eigen::ArrayXXd o = sigmoid(a_o);
  Eigen::ArrayXXd tanh_c = fast_tanh(c);

  CellState next{(o * tanh_c).matrix(), c.matrix()};
  if (tape != nullptr) {
    tape->zx = std::move(zx);
    tape->zh = std::move(zh);
    tape->c_prev = s.c;
    tape->i = std::move(i);
    tape->f = std::move(f);
    tape->g = std::move(g);
    tape->o = std::move(o);
    tape->c = next.c;
    tape->tanh_c = std::move(tanh_c);
  }
  return next;
}

Matrix head_forward(const HeadParams& p, const Matrix& h, const ModelConfig& config, const ForwardOptions& options,
                    HeadTape* tape) {
  Matrix z0 = h.unaryExpr([](double v) { return hardswish(v); });
  Matrix a1 = z0 * p.w1;
  a1.rowwise() += p.b1.row(0);
  Matrix z1 = a1.unaryExpr([](double v) { return hardswish(v); });
  Matrix mask;
  if (options.training && config.dropout > 0.0) {
    mask = dropout_mask(z1.rows(), z1.cols(), config.dropout, options.dropout_key);
    z1 = z1.cwiseProduct(mask);
  }
  Matrix out = z1 * p.w2;
  out.rowwise() += p.b2.row(0);
  if (config.target_scale != 1.0 || config.target_mean != 0.0)
    out = (out.array() * config.target_scale + config.target_mean).matrix();
  if (tape != nullptr) {
    tape->h = h;
    tape->z0 = std::move(z0);
    tape->a1 = std::move(a1);
    tape->mask = std::move(mask);
    tape->z1 = std::move(z1);
  }
  return out;
}

Matrix forward_impl(const Parameters& params, const ModelInput& input, const ForwardOptions& options, Tape* tape) {
  const auto& c = params.config;
  if (input.steps.empty()) throw Error(ErrorKind::ShapeMismatch, "no input steps");
  const auto n = input.steps.front().rows();
  const Matrix* lap = c.cheb_order > 1 ? input.laplacian : nullptr;

  Matrix h;
  if (c.kind == ModelKind::Gcn) {
    if (input.steps.size() != 1)
      throw Error(ErrorKind::ShapeMismatch, "single-graph model given " + std::to_string(input.steps.size()) +
                                                " steps");
    check_step_shapes(input.steps.front(), lap, c, n);
    Matrix basis = chebyshev_basis(lap, input.steps.front(), c.cheb_order);
    h = basis * params.conv.theta;
    h.rowwise() += params.conv.bias.row(0);
    if (tape != nullptr) tape->conv_basis = std::move(basis);
  } else {
    if (c.stacked && static_cast<int>(input.steps.size()) != c.steps)
      throw Error(ErrorKind::ShapeMismatch, "stacked model expects " + std::to_string(c.steps) + " steps, got " +
                                                std::to_string(input.steps.size()));
    CellState state{Matrix::Zero(n, c.hidden), Matrix::Zero(n, c.hidden)};
    if (tape != nullptr) tape->steps.resize(input.steps.size());
    for (std::size_t t = 0; t < input.steps.size(); ++t) {
      check_step_shapes(input.steps[t], lap, c, n);
      const auto& cell = params.cells[c.stacked ? t : 0];
      state = cell_forward(input.steps[t], state, lap, cell, c.cheb_order, tape ? &tape->steps[t] : nullptr);
    }
    h = std::move(state.h);
  }
  return head_forward(params.head, h, c, options, tape ? &tape->head : nullptr);
}

}  // namespace

CellState gconv_lstm_step(const Matrix& x, const CellState& state, const Matrix* laplacian, const CellParams& params,
                          int cheb_order) {
  if (state.h.rows() != x.rows() || state.c.rows() != x.rows() || state.h.cols() != params.peephole.cols() ||
      state.c.cols() != params.peephole.cols())
    throw Error(ErrorKind::ShapeMismatch, "cell state shape does not match input or hidden size");
  if (cheb_order > 1 && (laplacian == nullptr || laplacian->rows() != x.rows()))
    throw Error(ErrorKind::ShapeMismatch, "Laplacian missing or sized wrongly");
  return cell_forward(x, state, laplacian, params, cheb_order, nullptr);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, const DropoutKey& key) {
  Rng rng(derive_seed({key.seed, key.epoch, key.sample, 0x44524f50ULL}));
  const double keep = 1.0 - p;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

Matrix forward(const Parameters& params, const ModelInput& input, const ForwardOptions& options) {
  return forward_impl(params, input, options, nullptr);
}

Matrix forward_gcn_lstm(const Parameters& params, std::span<const Matrix> features, const Matrix& laplacian,
                        const ForwardOptions& options) {
  if (params.config.kind != ModelKind::GcnLstm) throw Error(ErrorKind::Config, "parameters are not a GCN-LSTM");
  return forward_impl(params, {features, &laplacian}, options, nullptr);
}

Matrix forward_gcn_baseline(const Parameters& params, const Matrix& features, const Matrix& laplacian,
                            const ForwardOptions& options) {
  if (params.config.kind != ModelKind::Gcn) throw Error(ErrorKind::Config, "parameters are not a GCN baseline");
  return forward_impl(params, {std::span<const Matrix>(&features, 1), &laplacian}, options, nullptr);
}

Matrix forward_lstm_baseline(const Parameters& params, std::span<const Matrix> features,
                             const ForwardOptions& options) {
  if (params.config.kind != ModelKind::Lstm) throw Error(ErrorKind::Config, "parameters are not an LSTM baseline");
  return forward_impl(params, {features, nullptr}, options, nullptr);
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorKind::ShapeMismatch, "prediction " + std::to_string(pred.rows()) + "x" +
                                              std::to_string(pred.cols()) + " vs target " +
                                              std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double loss_and_gradient(const Parameters& params, const ModelInput& input, const Matrix& target,
                         const ForwardOptions& options, Parameters& grad) {
  Tape tape;
  const Matrix pred = forward_impl(params, input, options, &tape);
  const double loss = mse_loss(pred, target);
  const auto& c = params.config;
  const Matrix* lap = c.cheb_order > 1 ? input.laplacian : nullptr;

  // Head.
  const Matrix d_out = (2.0 * c.target_scale / static_cast<double>(pred.size())) * (pred - target);
  auto& ht = tape.head;
  grad.head.w2.noalias() += ht.z1.transpose() * d_out;
  grad.head.b2 += d_out.colwise().sum();
  Matrix d_z1 = d_out * params.head.w2.transpose();
  if (ht.mask.size() != 0) d_z1 = d_z1.cwiseProduct(ht.mask);
  const Matrix d_a1 = d_z1.cwiseProduct(ht.a1.unaryExpr([](double v) { return hardswish_grad(v); }));
  grad.head.w1.noalias() += ht.z0.transpose() * d_a1;
  grad.head.b1 += d_a1.colwise().sum();
  const Matrix d_z0 = d_a1 * params.head.w1.transpose();
  Matrix d_h = d_z0.cwiseProduct(ht.h.unaryExpr([](double v) { return hardswish_grad(v); }));

  if (c.kind == ModelKind::Gcn) {
    grad.conv.theta.noalias() += tape.conv_basis.transpose() * d_h;
    grad.conv.bias += d_h.colwise().sum();
    return loss;
  }

  const auto hid = c.hidden;
  Matrix d_c = Matrix::Zero(d_h.rows(), hid);
  Matrix d_gates(d_h.rows(), 4 * hid);
  for (std::size_t t = tape.steps.size(); t-- > 0;) {
    const auto& s = tape.steps[t];
    const auto& p = params.cells[c.stacked ? t : 0];
    auto& g = grad.cells[c.stacked ? t : 0];
    const Eigen::ArrayXXd dh = d_h.array();

    const Eigen::ArrayXXd d_o = dh * s.tanh_c;
    Eigen::ArrayXXd dc = d_c.array() + dh * s.o * (1.0 - s.tanh_c.square());
    const Eigen::ArrayXXd da_o = d_o * s.o * (1.0 - s.o);
    dc += da_o.rowwise() * p.peephole.row(2).array();
    g.peephole.row(2) += (da_o * s.c.array()).colwise().sum().matrix();

    const Eigen::ArrayXXd c_prev = s.c_prev.array();
    const Eigen::ArrayXXd da_i = dc * s.g * s.i * (1.0 - s.i);
    const Eigen::ArrayXXd da_f = dc * c_prev * s.f * (1.0 - s.f);
    const Eigen::ArrayXXd da_c = dc * s.i * (1.0 - s.g.square());
    Eigen::ArrayXXd dc_prev = dc * s.f;
    dc_prev += da_i.rowwise() * p.peephole.row(0).array();
    dc_prev += da_f.rowwise() * p.peephole.row(1).array();
    g.peephole.row(0) += (da_i * c_prev).colwise().sum().matrix();
    g.peephole.row(1) += (da_f * c_prev).colwise().sum().matrix();

    d_gates.leftCols(hid) = da_i.matrix();
    d_gates.middleCols(hid, hid) = da_f.matrix();
    d_gates.middleCols(2 * hid, hid) = da_c.matrix();
    d_gates.rightCols(hid) = da_o.matrix();

    g.theta_x.noalias() += s.zx.transpose() * d_gates;
    if (s.zh.size() != 0) g.theta_h.noalias() += s.zh.transpose() * d_gates;
    g.bias += d_gates.colwise().sum();

    if (t > 0) {
      const Matrix d_zh = d_gates * p.theta_h.transpose();
      d_h = chebyshev_basis_adjoint(lap, d_zh, c.cheb_order);
      d_c = dc_prev.matrix();
    }
  }
  return loss;
}

}  // namespace firn
