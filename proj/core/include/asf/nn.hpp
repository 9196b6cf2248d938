#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asf/autograd.hpp"
#include "asf/rng.hpp"

namespace asf {

// Uniform fan-in init: values in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
template <typename T>
Tensor<T> init_params(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ContractError("init_params: fan_in must be positive");
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Block-diagonal linear map C -> C' over n channel groups. Parameter count
// is C*C'/n; with n == 1 it degenerates to a full matmul.
template <typename T>
class GroupLinear {
 public:
  GroupLinear(std::size_t in_channels, std::size_t out_channels, std::size_t groups,
              Rng& rng)
      : in_(in_channels), out_(out_channels), groups_(groups) {
    if (groups_ == 0 || in_ % groups_ != 0 || out_ % groups_ != 0)
      throw DimensionError("group count " + std::to_string(groups_) +
                           " must divide channels " + std::to_string(in_) + " and " +
                           std::to_string(out_));
    const std::size_t bi = in_ / groups_, bo = out_ / groups_;
    blocks_.reserve(groups_);
    for (std::size_t g = 0; g < groups_; ++g)
      blocks_.push_back(leaf(init_params<T>({bo, bi}, bi, rng)));
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t groups() const { return groups_; }
  std::size_t parameter_count() const { return in_ * out_ / groups_; }
  const std::vector<Var<T>>& blocks() const { return blocks_; }
  std::vector<Var<T>>& blocks() { return blocks_; }

  // x: C x M -> C' x M. Row groups are projected independently and
  // re-concatenated along the channel axis.
  Var<T> forward(const Var<T>& x) const {
    if (x->value.rank() != 2 || x->value.dim(0) != in_)
      throw DimensionError("group_linear expects " + std::to_string(in_) +
                           " input rows, got " + shape_str(x->value.shape()));
    if (groups_ == 1) return matmul(blocks_[0], x);
    const std::size_t bi = in_ / groups_;
    std::vector<Var<T>> parts;
    parts.reserve(groups_);
    for (std::size_t g = 0; g < groups_; ++g)
      parts.push_back(matmul(blocks_[g], slice(x, 0, g * bi, bi)));
    return concat(parts, std::size_t{0});
  }

 private:
  std::size_t in_, out_, groups_;
  std::vector<Var<T>> blocks_;
};

// Dot-product attention over spatio-temporal positions. The query is the
// beta projection at the last position (column M-1), giving one attention
// row over all M positions. No logit scaling.
template <typename T>
Var<T> attention_row(const Var<T>& beta_proj, const Var<T>& gamma_proj) {
  const auto& bs = beta_proj->value.shape();
  if (beta_proj->value.rank() != 2 || !beta_proj->value.same_shape(gamma_proj->value))
    throw DimensionError("attention_row shape mismatch: " + shape_str(bs) + " vs " +
                         shape_str(gamma_proj->value.shape()));
  const std::size_t m = bs[1];
  Var<T> q = slice(beta_proj, 1, m - 1, 1);            // C' x 1
  Var<T> logits = matmul(transpose(q), gamma_proj);    // 1 x M
  return softmax(logits, std::size_t{1});
}

enum class DropoutMode { Training, Inference };

struct DropoutSpec {
  double rate = 0.5;
  DropoutMode mode = DropoutMode::Inference;

  DropoutSpec() = default;
  DropoutSpec(double r, DropoutMode m) : rate(r), mode(m) {
    if (r < 0.0 || r >= 1.0)
      throw ContractError("dropout rate must be in [0,1), got " + std::to_string(r));
  }
};

// Inverted dropout: survivors scaled by 1/(1-rate) at train time so that
// inference mode is the exact identity.
template <typename T>
Var<T> dropout(const Var<T>& x, const DropoutSpec& spec, Rng& rng) {
  if (spec.mode == DropoutMode::Inference || spec.rate == 0.0) return x;
  Tensor<T> mask(x->value.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.bernoulli(spec.rate) ? T(0) : keep_scale;
  Tensor<T> c(x->value.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x->value[i] * mask[i];
  auto out = detail::make_result(std::move(c), {x});
  if (out->requires_grad) {
    Node<T>* xn = x.get();
    out->backprop = [xn, mask = std::move(mask)](const Tensor<T>& g) {
      Tensor<T> gx(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * mask[i];
      xn->accumulate(gx);
    };
  }
  return out;
}

// Mean binary cross-entropy of one prediction vector against 0/1 labels.
// Log arguments clamped at 1e-12.
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& pred, const std::vector<std::uint8_t>& labels) {
  const auto& pv = pred->value;
  if (pv.rank() != 1 || pv.dim(0) != labels.size())
    throw DimensionError("bce: prediction shape " + shape_str(pv.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  const std::size_t a = labels.size();
  constexpr double kClamp = 1e-12;
  double acc = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    const double p = static_cast<double>(pv[i]);
    if (p < 0.0 || p > 1.0)
      throw NumericError("bce: prediction " + std::to_string(p) + " outside [0,1]");
    const double pc = std::min(std::max(p, kClamp), 1.0 - kClamp);
    acc += labels[i] ? -std::log(pc) : -std::log(1.0 - pc);
  }
  auto out = detail::make_result(
      Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(a))), {pred});
  if (out->requires_grad) {
    Node<T>* pn = pred.get();
    out->backprop = [pn, labels, a](const Tensor<T>& g) {
      Tensor<T> gp(pn->value.shape());
      for (std::size_t i = 0; i < a; ++i) {
        const double p = static_cast<double>(pn->value[i]);
        const double pc = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
        const double d = labels[i] ? -1.0 / pc : 1.0 / (1.0 - pc);
        gp[i] = static_cast<T>(static_cast<double>(g[0]) * d / static_cast<double>(a));
      }
      pn->accumulate(gp);
    };
  }
  return out;
}

}  // namespace asf
