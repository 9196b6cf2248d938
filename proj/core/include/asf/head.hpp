#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asf/nn.hpp"

namespace asf {

struct HeadConfig {
  std::size_t backbone_channels = 2048;  // C
  std::size_t feature_channels = 128;    // C'
  std::size_t observations = 64;         // K
  std::size_t activities = 157;          // A
  std::size_t groups = 32;               // n
  double dropout_rate = 0.5;

  void validate() const {
    if (!backbone_channels || !feature_channels || !observations || !activities ||
        !groups)
      throw ConfigError("head config fields must be positive");
    if (backbone_channels % groups != 0 || feature_channels % groups != 0)
      throw ConfigError("group count " + std::to_string(groups) +
                        " must divide C=" + std::to_string(backbone_channels) +
                        " and C'=" + std::to_string(feature_channels));
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout rate must be in [0,1)");
  }

  bool operator==(const HeadConfig&) const = default;
};

// Which head stages are instantiated; ablation switches per Table-style
// structure experiments.
struct HeadVariant {
  bool correlation = true;        // correlation map + F_OC branch
  bool activity_specific = true;  // per-activity attention (false: one shared row)

  bool operator==(const HeadVariant&) const = default;
};

// Backbone feature volume F_f: C x M with M = T*W*H flattened t-major,
// then w, then h.
template <typename T>
struct FeatureVolume {
  Tensor<T> data;  // C x M
  std::size_t t = 0, w = 0, h = 0;

  FeatureVolume() = default;
  FeatureVolume(Tensor<T> d, std::size_t t_, std::size_t w_, std::size_t h_)
      : data(std::move(d)), t(t_), w(w_), h(h_) {
    if (data.rank() != 2 || data.dim(1) != t * w * h)
      throw DimensionError("feature volume " + shape_str(data.shape()) +
                           " inconsistent with dims " + std::to_string(t) + "x" +
                           std::to_string(w) + "x" + std::to_string(h));
  }
  std::size_t positions() const { return t * w * h; }
};

template <typename T>
struct ObservationSet {
  Var<T> data;    // K x C'
  Var<T> attn_o;  // K x M, rows stochastic
};

template <typename T>
struct ActivityFeatureSet {
  Var<T> f_a;            // A x C'
  Var<T> attn_a;         // A x K (1 x K in shared-attention ablation)
  std::optional<Var<T>> f_ac;  // A x C'
};

template <typename T>
struct CorrelationMap {
  Tensor<T> mask;  // A x A, static
  Var<T> attn_c;   // A x A, rows stochastic
  Var<T> corr;     // attn_c + mask
};

template <typename T>
struct Predictions {
  Var<T> f_oa;                 // A
  std::optional<Var<T>> f_oc;  // A
  Var<T> f_out;                // A
};

struct ParamBreakdown {
  std::size_t observation_banks = 0;       // g^alpha, g^beta, g^gamma
  std::size_t activity_queries = 0;        // Q
  std::size_t correlation_projections = 0; // p^beta, p^gamma
  std::size_t output_layer = 0;            // W^phi, W^theta, biases
  std::size_t total() const {
    return observation_banks + activity_queries + correlation_projections +
           output_layer;
  }
};

// Exact learnable-scalar count of the full head:
//   3*K*(C*C'/n) + A*C' + 2*(C'*C'/n) + 2*(A*C' + A)
inline ParamBreakdown count_parameters_breakdown(const HeadConfig& cfg) {
  cfg.validate();
  ParamBreakdown b;
  const std::size_t gl = cfg.backbone_channels * cfg.feature_channels / cfg.groups;
  b.observation_banks = 3 * cfg.observations * gl;
  b.activity_queries = cfg.activities * cfg.feature_channels;
  b.correlation_projections =
      2 * (cfg.feature_channels * cfg.feature_channels / cfg.groups);
  b.output_layer = 2 * (cfg.activities * cfg.feature_channels + cfg.activities);
  return b;
}

inline std::size_t count_parameters(const HeadConfig& cfg) {
  return count_parameters_breakdown(cfg).total();
}

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
  bool is_bias = false;
};

// All learnable weights of the head. Observation banks are disjoint per k,
// so perturbing observation j never touches observation k != j.
template <typename T>
class HeadParams {
 public:
  HeadParams(HeadConfig cfg, HeadVariant variant, std::uint64_t seed)
      : cfg_(std::move(cfg)), variant_(variant) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t c = cfg_.backbone_channels, cp = cfg_.feature_channels;
    const std::size_t k = cfg_.observations, a = cfg_.activities, n = cfg_.groups;
    g_alpha_.reserve(k);
    g_beta_.reserve(k);
    g_gamma_.reserve(k);
    for (std::size_t i = 0; i < k; ++i) g_alpha_.emplace_back(c, cp, n, rng);
    for (std::size_t i = 0; i < k; ++i) g_beta_.emplace_back(c, cp, n, rng);
    for (std::size_t i = 0; i < k; ++i) g_gamma_.emplace_back(c, cp, n, rng);
    const std::size_t query_rows = variant_.activity_specific ? a : 1;
    queries_ = leaf(init_params<T>({query_rows, cp}, cp, rng));
    if (variant_.correlation) {
      p_beta_.emplace(cp, cp, n, rng);
      p_gamma_.emplace(cp, cp, n, rng);
    }
    w_phi_ = leaf(init_params<T>({a, cp}, cp, rng));
    b_phi_ = leaf(Tensor<T>({a}));
    if (variant_.correlation) {
      w_theta_ = leaf(init_params<T>({a, cp}, cp, rng));
      b_theta_ = leaf(Tensor<T>({a}));
    }
  }

  const HeadConfig& config() const { return cfg_; }
  const HeadVariant& variant() const { return variant_; }

  std::vector<GroupLinear<T>>& g_alpha() { return g_alpha_; }
  std::vector<GroupLinear<T>>& g_beta() { return g_beta_; }
  std::vector<GroupLinear<T>>& g_gamma() { return g_gamma_; }
  const std::vector<GroupLinear<T>>& g_alpha() const { return g_alpha_; }
  const std::vector<GroupLinear<T>>& g_beta() const { return g_beta_; }
  const std::vector<GroupLinear<T>>& g_gamma() const { return g_gamma_; }
  Var<T>& queries() { return queries_; }
  const Var<T>& queries() const { return queries_; }
  std::optional<GroupLinear<T>>& p_beta() { return p_beta_; }
  std::optional<GroupLinear<T>>& p_gamma() { return p_gamma_; }
  const std::optional<GroupLinear<T>>& p_beta() const { return p_beta_; }
  const std::optional<GroupLinear<T>>& p_gamma() const { return p_gamma_; }
  Var<T>& w_phi() { return w_phi_; }
  Var<T>& b_phi() { return b_phi_; }
  Var<T>& w_theta() { return *w_theta_; }
  Var<T>& b_theta() { return *b_theta_; }
  const Var<T>& w_phi() const { return w_phi_; }
  const Var<T>& b_phi() const { return b_phi_; }
  const Var<T>& w_theta() const { return *w_theta_; }
  const Var<T>& b_theta() const { return *b_theta_; }

  // Fixed enumeration order; the checkpoint format and the optimizer both
  // rely on it.
  std::vector<NamedParam<T>> named_params() const {
    std::vector<NamedParam<T>> out;
    auto add_bank = [&out](const char* base, const std::vector<GroupLinear<T>>& bank) {
      for (std::size_t k = 0; k < bank.size(); ++k)
        for (std::size_t g = 0; g < bank[k].blocks().size(); ++g)
          out.push_back({std::string(base) + "." + std::to_string(k) + "." +
                             std::to_string(g),
                         bank[k].blocks()[g], false});
    };
    add_bank("g_alpha", g_alpha_);
    add_bank("g_beta", g_beta_);
    add_bank("g_gamma", g_gamma_);
    out.push_back({"queries", queries_, false});
    if (p_beta_) {
      for (std::size_t g = 0; g < p_beta_->blocks().size(); ++g)
        out.push_back({"p_beta." + std::to_string(g), p_beta_->blocks()[g], false});
      for (std::size_t g = 0; g < p_gamma_->blocks().size(); ++g)
        out.push_back({"p_gamma." + std::to_string(g), p_gamma_->blocks()[g], false});
    }
    out.push_back({"w_phi", w_phi_, false});
    out.push_back({"b_phi", b_phi_, true});
    if (w_theta_) {
      out.push_back({"w_theta", *w_theta_, false});
      out.push_back({"b_theta", *b_theta_, true});
    }
    return out;
  }

  std::vector<Var<T>> all_vars() const {
    std::vector<Var<T>> vs;
    for (auto& np : named_params()) vs.push_back(np.var);
    return vs;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& np : named_params()) n += np.var->value.size();
    return n;
  }

 private:
  HeadConfig cfg_;
  HeadVariant variant_;
  std::vector<GroupLinear<T>> g_alpha_, g_beta_, g_gamma_;
  Var<T> queries_;
  std::optional<GroupLinear<T>> p_beta_, p_gamma_;
  Var<T> w_phi_, b_phi_;
  std::optional<Var<T>> w_theta_, b_theta_;
};

// --- forward stages ---------------------------------------------------

// Obs_k = Attn_Ok * [g_k^alpha(F_f)]^T with Attn_Ok from the beta/gamma
// projections of the same k; banks are disjoint across k.
template <typename T>
ObservationSet<T> compute_observations(const Var<T>& ff, const HeadParams<T>& params) {
  if (ff->value.rank() != 2 || ff->value.dim(0) != params.config().backbone_channels)
    throw DimensionError("feature volume channels " + shape_str(ff->value.shape()) +
                         " do not match config C=" +
                         std::to_string(params.config().backbone_channels));
  const std::size_t k = params.config().observations;
  std::vector<Var<T>> obs_rows, attn_rows;
  obs_rows.reserve(k);
  attn_rows.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Var<T> alpha = params.g_alpha()[i].forward(ff);
    Var<T> attn = attention_row(params.g_beta()[i].forward(ff),
                                params.g_gamma()[i].forward(ff));
    obs_rows.push_back(matmul(attn, transpose(alpha)));  // 1 x C'
    attn_rows.push_back(attn);
  }
  return {concat(obs_rows, std::size_t{0}), concat(attn_rows, std::size_t{0})};
}

// Attn_A(i) = softmax_K(Q_i . Obs^T); F_A(i) = Attn_A(i) * Obs. In the
// shared-attention ablation one row is computed and broadcast to all A.
template <typename T>
ActivityFeatureSet<T> compute_activity_features(const ObservationSet<T>& obs,
                                                const HeadParams<T>& params) {
  Var<T> logits = matmul(params.queries(), transpose(obs.data));  // A x K
  Var<T> attn_a = softmax(logits, std::size_t{1});
  Var<T> f_a = matmul(attn_a, obs.data);  // rows x C'
  if (!params.variant().activity_specific) {
    std::vector<Var<T>> rows(params.config().activities, f_a);
    f_a = concat(rows, std::size_t{0});
  }
  return {f_a, attn_a, std::nullopt};
}

// Mask(j,k) = N_{j,k} / N_j from training labels; rows of never-seen
// activities are all zeros.
template <typename T>
Tensor<T> compute_mask(const std::vector<std::vector<std::uint8_t>>& labels,
                       std::size_t activities) {
  std::vector<std::size_t> n_j(activities, 0);
  std::vector<std::size_t> n_jk(activities * activities, 0);
  for (const auto& row : labels) {
    if (row.size() != activities)
      throw DataError("label row length " + std::to_string(row.size()) +
                      " does not match A=" + std::to_string(activities));
    for (std::size_t j = 0; j < activities; ++j) {
      if (row[j] > 1) throw DataError("labels must be binary");
      if (!row[j]) continue;
      ++n_j[j];
      for (std::size_t k = 0; k < activities; ++k)
        if (row[k]) ++n_jk[j * activities + k];
    }
  }
  Tensor<T> mask({activities, activities});
  for (std::size_t j = 0; j < activities; ++j) {
    if (n_j[j] == 0) continue;
    for (std::size_t k = 0; k < activities; ++k)
      mask.at(j, k) = static_cast<T>(static_cast<double>(n_jk[j * activities + k]) /
                                     static_cast<double>(n_j[j]));
  }
  return mask;
}

// Corr = Attn_C + Mask; F_AC = Corr * F_A. Reductions along the activity
// axis use exact sums so activity permutations commute bitwise.
template <typename T>
std::pair<CorrelationMap<T>, Var<T>> compute_correlation(
    const ActivityFeatureSet<T>& fa, const Tensor<T>& mask,
    const HeadParams<T>& params) {
  const std::size_t a = params.config().activities;
  if (mask.rank() != 2 || mask.dim(0) != a || mask.dim(1) != a)
    throw DimensionError("mask shape " + shape_str(mask.shape()) + " must be " +
                         std::to_string(a) + "x" + std::to_string(a));
  if (!params.p_beta())
    throw ContractError("correlation stage disabled for these params");
  Var<T> fa_t = transpose(fa.f_a);  // C' x A
  Var<T> pb = transpose(params.p_beta()->forward(fa_t));   // A x C'
  Var<T> pg = params.p_gamma()->forward(fa_t);             // C' x A
  Var<T> attn_c = softmax(matmul(pb, pg), std::size_t{1}); // A x A
  Var<T> corr = add(attn_c, constant(mask));
  Var<T> f_ac = matmul(corr, fa.f_a, /*exact=*/true);
  return {CorrelationMap<T>{mask, attn_c, corr}, f_ac};
}

// Dual-output prediction. F_OA from F_A, F_OC from F_AC, each a per-row
// dot product with its own weights; F_out is the elementwise mean.
template <typename T>
Predictions<T> predict(const ActivityFeatureSet<T>& fa, const HeadParams<T>& params,
                       const DropoutSpec& drop, Rng& rng) {
  auto branch = [&](const Var<T>& features, const Var<T>& w, const Var<T>& b) {
    Var<T> d = dropout(features, drop, rng);
    return sigmoid(add(reduce_sum(mul(w, d), std::size_t{1}), b));
  };
  Predictions<T> out;
  out.f_oa = branch(fa.f_a, params.w_phi(), params.b_phi());
  if (params.variant().correlation) {
    if (!fa.f_ac) throw ContractError("predict: F_AC missing before dual output");
    out.f_oc = branch(*fa.f_ac, params.w_theta(), params.b_theta());
    out.f_out = scale(add(out.f_oa, *out.f_oc), T(0.5));
  } else {
    out.f_out = out.f_oa;
  }
  return out;
}

template <typename T>
struct ForwardTrace {
  ObservationSet<T> obs;
  ActivityFeatureSet<T> features;
  std::optional<CorrelationMap<T>> correlation;
  Predictions<T> predictions;
};

template <typename T>
ForwardTrace<T> head_forward(const Var<T>& ff, const HeadParams<T>& params,
                             const Tensor<T>& mask, const DropoutSpec& drop,
                             Rng& rng) {
  ForwardTrace<T> trace;
  trace.obs = compute_observations(ff, params);
  trace.features = compute_activity_features(trace.obs, params);
  if (params.variant().correlation) {
    auto [corr, f_ac] = compute_correlation(trace.features, mask, params);
    trace.correlation = std::move(corr);
    trace.features.f_ac = std::move(f_ac);
  }
  trace.predictions = predict(trace.features, params, drop, rng);
  return trace;
}

template <typename T>
ForwardTrace<T> head_forward(const FeatureVolume<T>& ff, const HeadParams<T>& params,
                             const Tensor<T>& mask, const DropoutSpec& drop,
                             Rng& rng) {
  return head_forward(constant(ff.data), params, mask, drop, rng);
}

// --- activity-specific map export -------------------------------------

struct RegionBox {
  std::size_t activity = 0;
  std::size_t t = 0;
  std::size_t w_min = 0, h_min = 0, w_max = 0, h_max = 0;  // inclusive cells
};

template <typename T>
struct ActivityMap {
  std::size_t activity = 0;
  Tensor<T> raw;  // T x W x H convex combination of attention rows, sums to 1
  Tensor<T> map;  // min-max normalized to [0,1]; constant raw map -> all zeros
  std::vector<RegionBox> boxes;
};

// raw_map(i, m) = sum_k Attn_A(i,k) * Attn_O(k,m); boxes are per-frame tight
// rectangles of normalized cells >= 0.5.
template <typename T>
std::vector<ActivityMap<T>> export_activity_maps(
    const Tensor<T>& attn_a, const Tensor<T>& attn_o, std::size_t t, std::size_t w,
    std::size_t h, const std::vector<std::size_t>& activities,
    std::size_t total_activities) {
  const std::size_t k = attn_o.dim(0), m = attn_o.dim(1);
  if (m != t * w * h)
    throw DimensionError("attn_o positions " + std::to_string(m) +
                         " vs dims " + std::to_string(t * w * h));
  const bool shared = attn_a.dim(0) == 1;
  std::vector<ActivityMap<T>> out;
  out.reserve(activities.size());
  for (std::size_t act : activities) {
    if (act >= total_activities)
      throw ContractError("activity index " + std::to_string(act) + " out of range");
    ActivityMap<T> am;
    am.activity = act;
    am.raw = Tensor<T>({t, w, h});
    const std::size_t arow = shared ? 0 : act;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const T weight = attn_a.at(arow, ki);
      const T* row = attn_o.raw() + ki * m;
      for (std::size_t mi = 0; mi < m; ++mi) am.raw[mi] += weight * row[mi];
    }
    T lo = am.raw[0], hi = am.raw[0];
    for (std::size_t mi = 1; mi < m; ++mi) {
      lo = std::min(lo, am.raw[mi]);
      hi = std::max(hi, am.raw[mi]);
    }
    am.map = Tensor<T>({t, w, h});
    if (hi > lo)
      for (std::size_t mi = 0; mi < m; ++mi) am.map[mi] = (am.raw[mi] - lo) / (hi - lo);
    // per-frame tight bounding rectangle of cells >= 0.5
    for (std::size_t ti = 0; ti < t; ++ti) {
      bool any = false;
      std::size_t wmin = w, wmax = 0, hmin = h, hmax = 0;
      for (std::size_t wi = 0; wi < w; ++wi)
        for (std::size_t hi2 = 0; hi2 < h; ++hi2) {
          if (am.map[(ti * w + wi) * h + hi2] >= T(0.5)) {
            any = true;
            wmin = std::min(wmin, wi);
            wmax = std::max(wmax, wi);
            hmin = std::min(hmin, hi2);
            hmax = std::max(hmax, hi2);
          }
        }
      if (any) am.boxes.push_back({act, ti, wmin, hmin, wmax, hmax});
    }
    out.push_back(std::move(am));
  }
  return out;
}

}  // namespace asf
