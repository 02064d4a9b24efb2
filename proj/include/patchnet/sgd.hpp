#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"

namespace patchnet {

// Momentum SGD with a step-halving schedule: the effective rate at `epoch`
// is learning_rate * 0.5^floor(epoch / halve_every).
struct SgdState {
  double learning_rate = 0.002;
  int halve_every = 90;
  double momentum = 0.9;

  void validate() const {
    require(learning_rate > 0, ErrorCode::InvariantViolation, "learning_rate must be > 0");
    require(halve_every > 0, ErrorCode::InvariantViolation, "halve_every must be > 0");
    require(momentum >= 0 && momentum < 1, ErrorCode::InvariantViolation,
            "momentum must lie in [0, 1)");
  }

  double effective_rate(int epoch) const {
    return learning_rate * std::pow(0.5, epoch / halve_every);
  }
};

// v <- momentum * v + g;  p <- p - lr_eff * v.
template <class S>
inline void sgd_step(std::span<S> params, std::span<const S> grads,
                     std::span<S> velocity, const SgdState& state, int epoch) {
  state.validate();
  require(params.size() == grads.size() && params.size() == velocity.size(),
          ErrorCode::InvariantViolation,
          "sgd_step: size mismatch params=" + format_int(static_cast<std::int64_t>(params.size())) +
              " grads=" + format_int(static_cast<std::int64_t>(grads.size())) +
              " velocity=" + format_int(static_cast<std::int64_t>(velocity.size())));
  const S lr = static_cast<S>(state.effective_rate(epoch));
  const S mu = static_cast<S>(state.momentum);
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

}  // namespace patchnet
