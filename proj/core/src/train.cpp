#include "asf/train.hpp"

#include <algorithm>

namespace asf {

ViewPlan ViewPlan::standard(std::size_t t_full, std::size_t at_r2,
                            std::size_t at_r4, std::size_t at_r8) {
  ViewPlan plan;
  auto add = [&plan, t_full](std::size_t rate, std::size_t count) {
    if (count == 0) return;
    if (32 * rate > t_full)
      throw ConfigError("rate " + std::to_string(rate) + " infeasible for t_full=" +
                        std::to_string(t_full));
    const std::size_t max_off = t_full - 32 * rate;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t off =
          count == 1 ? max_off / 2
                     : static_cast<std::size_t>(
                           std::llround(static_cast<double>(i) *
                                        static_cast<double>(max_off) /
                                        static_cast<double>(count - 1)));
      plan.views.push_back({rate, off});
    }
  };
  add(2, at_r2);
  add(4, at_r4);
  add(8, at_r8);
  return plan;
}

TrainResult train(const std::vector<const SyntheticVideo*>& train_videos,
                  const BackboneStub& backbone, HeadParams<float>& params,
                  const Tensor<float>& mask, const TrainConfig& cfg) {
  if (train_videos.empty()) throw ConfigError("training set is empty");
  const std::size_t t_full = train_videos[0]->frames.dim(1);
  cfg.validate(t_full);

  const auto named = params.named_params();
  const auto vars = params.all_vars();
  const Rng root(cfg.seed);
  const std::size_t total = cfg.iterations + cfg.finetune_iterations;

  TrainResult result;
  result.loss_curve.reserve(total);
  for (std::size_t it = 0; it < total; ++it) {
    const bool finetune = it >= cfg.iterations;
    Rng it_rng = root.derive(it + 1);
    zero_grad(vars);

    Var<float> batch_loss;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const SyntheticVideo& video =
          *train_videos[it_rng.uniform_index(train_videos.size())];
      const std::size_t rate =
          finetune ? cfg.tuning_rates[it_rng.uniform_index(cfg.tuning_rates.size())]
                   : cfg.base_rate;
      const std::size_t max_off = t_full - 32 * rate;
      const std::size_t offset = max_off ? it_rng.uniform_index(max_off + 1) : 0;

      FeatureVolume<float> ff = backbone.forward(sample_clip(video, rate, offset));
      Rng drop_rng = it_rng.derive(0xD0 + b);
      DropoutSpec drop(params.config().dropout_rate, DropoutMode::Training);
      auto trace = head_forward(ff, params, mask, drop, drop_rng);
      Var<float> loss = prediction_loss(trace.predictions, video.labels);
      batch_loss = batch_loss ? add(batch_loss, loss) : loss;
    }
    batch_loss = scale(batch_loss, 1.0f / static_cast<float>(cfg.batch_size));
    const double loss_value = batch_loss->value[0];
    if (!std::isfinite(loss_value))
      throw TrainingError("non-finite loss at iteration " + std::to_string(it));
    backward(batch_loss);
    sgd_step(named, cfg.learning_rate, cfg.weight_decay);
    result.loss_curve.push_back(loss_value);
  }
  return result;
}

Tensor<float> multi_view_predict(const SyntheticVideo& video,
                                 const BackboneStub& backbone,
                                 const HeadParams<float>& params,
                                 const Tensor<float>& mask, const ViewPlan& plan) {
  const std::size_t t_full = video.frames.dim(1);
  plan.validate(t_full);
  std::vector<View> views = plan.views;
  std::sort(views.begin(), views.end(), [](const View& a, const View& b) {
    return a.rate != b.rate ? a.rate < b.rate : a.offset < b.offset;
  });

  Tensor<float> score({params.config().activities});
  Rng dummy(0);
  const DropoutSpec drop(params.config().dropout_rate, DropoutMode::Inference);
  for (const auto& v : views) {
    FeatureVolume<float> ff = backbone.forward(sample_clip(video, v.rate, v.offset));
    auto trace = head_forward(ff, params, mask, drop, dummy);
    const auto& out = trace.predictions.f_out->value;
    for (std::size_t a = 0; a < score.size(); ++a) score[a] += out[a];
  }
  return score;
}

}  // namespace asf
