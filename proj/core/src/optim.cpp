#include "firn/optim.hpp"

#include <cmath>
#include <vector>

namespace firn {

AdamState make_adam_state(const Parameters& params, const AdamOptions& options) {
  return {options, params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(Parameters& params, const Parameters& grad, AdamState& state) {
  const auto& o = state.options;
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));

  std::vector<const Matrix*> grads;
  grad.for_each([&](const std::string&, const Matrix& g) { grads.push_back(&g); });
  std::vector<Matrix*> m1, m2;
  state.first.for_each([&](const std::string&, Matrix& m) { m1.push_back(&m); });
  state.second.for_each([&](const std::string&, Matrix& m) { m2.push_back(&m); });

  std::size_t k = 0;
  params.for_each([&](const std::string&, Matrix& p) {
    const auto g = grads[k]->array();
    auto m = m1[k]->array();
    auto v = m2[k]->array();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    p.array() -= o.learning_rate * (m / bc1) / ((v / bc2).sqrt() + o.epsilon);
    ++k;
  });
}

}  // namespace firn
