#pragma once

#include <vector>

#include "asf/dataset.hpp"
#include "asf/head.hpp"
#include "asf/metrics.hpp"

namespace asf {

struct TrainConfig {
  double learning_rate = 3.5e-2;
  double weight_decay = 1.25e-5;
  std::size_t batch_size = 12;
  std::size_t iterations = 2000;           // phase 1, fixed base_rate
  std::size_t finetune_iterations = 1000;  // phase 2, random tuning rate
  std::size_t base_rate = 4;
  std::vector<std::size_t> tuning_rates{2, 4, 8};
  std::uint64_t seed = 7;

  void validate(std::size_t t_full) const {
    if (learning_rate < 0 || weight_decay < 0)
      throw ConfigError("learning rate and weight decay must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (base_rate == 0 || 32 * base_rate > t_full)
      throw ConfigError("base rate " + std::to_string(base_rate) +
                        " infeasible for t_full=" + std::to_string(t_full));
    if (tuning_rates.empty()) throw ConfigError("tuning rates must be nonempty");
    for (auto r : tuning_rates)
      if (r == 0 || 32 * r > t_full)
        throw ConfigError("tuning rate " + std::to_string(r) +
                          " infeasible for t_full=" + std::to_string(t_full));
  }
};

struct View {
  std::size_t rate = 4;
  std::size_t offset = 0;

  bool operator==(const View&) const = default;
};

struct ViewPlan {
  std::vector<View> views;

  // The published evaluation split: 9 views at r=2, 12 at r=4, 9 at r=8, offsets
  // evenly spaced over the feasible range.
  static ViewPlan standard(std::size_t t_full, std::size_t at_r2 = 9,
                           std::size_t at_r4 = 12, std::size_t at_r8 = 9);

  void validate(std::size_t t_full) const {
    for (const auto& v : views)
      if (v.rate == 0 || v.offset + 32 * v.rate > t_full)
        throw ConfigError("view (r=" + std::to_string(v.rate) + ", offset=" +
                          std::to_string(v.offset) + ") does not fit t_full=" +
                          std::to_string(t_full));
  }
};

// 0.5 * (BCE(F_OA, y) + BCE(F_OC, y)); falls back to the single head when
// the correlation branch is ablated.
template <typename T>
Var<T> bce_loss(const Var<T>& pred_oa, const Var<T>& pred_oc,
                const std::vector<std::uint8_t>& labels) {
  return scale(add(binary_cross_entropy(pred_oa, labels),
                   binary_cross_entropy(pred_oc, labels)),
               T(0.5));
}

template <typename T>
Var<T> prediction_loss(const Predictions<T>& preds,
                       const std::vector<std::uint8_t>& labels) {
  if (preds.f_oc) return bce_loss(preds.f_oa, *preds.f_oc, labels);
  return binary_cross_entropy(preds.f_oa, labels);
}

// w <- w - lr * (g + wd * w); biases are excluded from weight decay.
template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, double lr,
              double weight_decay) {
  for (const auto& np : params) {
    if (!np.var->has_grad)
      throw ContractError("sgd_step: no gradient for " + np.name);
    const double wd = np.is_bias ? 0.0 : weight_decay;
    auto& w = np.var->value;
    const auto& g = np.var->grad;
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<T>(w[i] - lr * (static_cast<double>(g[i]) +
                                         wd * static_cast<double>(w[i])));
    w.check_finite("sgd_step");
  }
}

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per iteration, both phases
};

// Two-phase schedule: `iterations` steps at base_rate, then
// `finetune_iterations` steps with the rate drawn per batch item from
// tuning_rates. The backbone stub is never updated. Deterministic under
// cfg.seed.
TrainResult train(const std::vector<const SyntheticVideo*>& train_videos,
                  const BackboneStub& backbone, HeadParams<float>& params,
                  const Tensor<float>& mask, const TrainConfig& cfg);

// Sum of inference-mode F_out over the plan's views. Views are summed in
// (rate, offset) order, so permuting the plan cannot change the result.
Tensor<float> multi_view_predict(const SyntheticVideo& video,
                                 const BackboneStub& backbone,
                                 const HeadParams<float>& params,
                                 const Tensor<float>& mask, const ViewPlan& plan);

}  // namespace asf
