// asf: synthetic multi-label activity-recognition experiments.
// Subcommands: gen-data, train, eval, params, visualize.
// Exit codes: 0 ok, 2 config, 3 I/O, 4 divergence, 5 config/checkpoint
// mismatch, 6 missing entity.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "asf/checkpoint.hpp"
#include "asf/metrics.hpp"
#include "asf/runconfig.hpp"
#include "asf/tensor_io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitMismatch = 5;
constexpr int kExitMissing = 6;

struct ExitWith {
  int code;
  std::string message;
};

std::string human_millions(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(n) / 1e6);
  return buf;
}

asf::RunConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  try {
    return asf::load_run_config(path, overrides);
  } catch (const asf::ConfigError& e) {
    throw ExitWith{kExitConfig, e.what()};
  } catch (const asf::IoError& e) {
    throw ExitWith{kExitIo, e.what()};
  }
}

asf::LoadedDataset load_data(const asf::RunConfig& cfg) {
  try {
    return asf::load_dataset(cfg.data_dir);
  } catch (const asf::Error& e) {
    throw ExitWith{kExitIo, e.what()};
  }
}

asf::HeadConfig effective_head_config(const asf::RunConfig& cfg,
                                      const asf::DatasetSpec& spec) {
  if (cfg.dataset.activities != spec.activities)
    throw ExitWith{kExitConfig,
                   "config activities=" + std::to_string(cfg.dataset.activities) +
                       " but dataset has " + std::to_string(spec.activities)};
  asf::HeadConfig head = cfg.head;
  head.activities = spec.activities;
  return head;
}

asf::Tensor<float> training_mask(const asf::LoadedDataset& data) {
  // mask statistics come from the training split only
  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto& v : data.videos)
    if (!v.is_eval) labels.push_back(v.labels);
  return asf::compute_mask<float>(labels, data.spec.activities);
}

// --- gen-data ----------------------------------------------------------

int run_gen_data(const asf::RunConfig& cfg) {
  auto videos = asf::generate_dataset(cfg.dataset);
  try {
    asf::write_dataset(cfg.data_dir, cfg.dataset, videos);
  } catch (const asf::IoError& e) {
    throw ExitWith{kExitIo, e.what()};
  }
  std::vector<std::size_t> freq(cfg.dataset.activities, 0);
  std::size_t n_train = 0;
  for (const auto& v : videos) {
    if (!v.is_eval) ++n_train;
    for (std::size_t a = 0; a < freq.size(); ++a) freq[a] += v.labels[a];
  }
  std::cout << "wrote " << videos.size() << " videos (" << n_train << " train, "
            << videos.size() - n_train << " eval) to " << cfg.data_dir << "\n";
  std::cout << "label frequencies:";
  for (std::size_t a = 0; a < freq.size(); ++a) std::cout << " " << freq[a];
  std::cout << "\n";
  return 0;
}

// --- train -------------------------------------------------------------

int run_train(const asf::RunConfig& cfg) {
  auto data = load_data(cfg);
  const asf::HeadConfig head = effective_head_config(cfg, data.spec);
  const asf::Tensor<float> mask = training_mask(data);
  asf::BackboneStub backbone(data.spec.channels, head.backbone_channels,
                             cfg.temporal_pool, cfg.backbone_seed);
  asf::HeadParams<float> params(head, cfg.variant(), cfg.init_seed);

  std::vector<const asf::SyntheticVideo*> train_videos;
  for (const auto& v : data.videos)
    if (!v.is_eval) train_videos.push_back(&v);

  asf::TrainResult result;
  try {
    result = asf::train(train_videos, backbone, params, mask, cfg.train);
  } catch (const asf::TrainingError& e) {
    throw ExitWith{kExitDivergence, e.what()};
  }

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path out(cfg.output_dir);
  try {
    asf::save_checkpoint(out / "checkpoint.asfh", params);
    asf::write_tensor(out / "mask.asft", mask);
    std::ofstream csv(out / "loss.csv", std::ios::trunc);
    if (!csv) throw asf::IoError("cannot write " + (out / "loss.csv").string());
    csv << "iteration,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i)
      csv << i << "," << result.loss_curve[i] << "\n";
  } catch (const asf::IoError& e) {
    throw ExitWith{kExitIo, e.what()};
  }
  std::cout << "trained " << result.loss_curve.size() << " iterations; final loss "
            << result.loss_curve.back() << "\n";
  std::cout << "checkpoint: " << (out / "checkpoint.asfh").string() << "\n";
  return 0;
}

// --- eval --------------------------------------------------------------

asf::HeadParams<float> load_matching_checkpoint(const std::string& path,
                                                const asf::RunConfig& cfg,
                                                const asf::DatasetSpec& spec) {
  asf::HeadParams<float> params = [&] {
    try {
      return asf::load_checkpoint(path);
    } catch (const asf::Error& e) {
      throw ExitWith{kExitIo, e.what()};
    }
  }();
  const asf::HeadConfig expect = effective_head_config(cfg, spec);
  if (!(params.config() == expect))
    throw ExitWith{kExitMismatch, "checkpoint head config does not match run config"};
  if (!(params.variant() == cfg.variant()))
    throw ExitWith{kExitMismatch,
                   "checkpoint ablation variant does not match run config"};
  return params;
}

asf::EvalReport evaluate_split(const asf::LoadedDataset& data,
                               const asf::BackboneStub& backbone,
                               const asf::HeadParams<float>& params,
                               const asf::Tensor<float>& mask,
                               const asf::ViewPlan& plan, bool eval_split,
                               std::size_t threads) {
  const auto indices = data.split_indices(eval_split);
  if (indices.empty())
    throw ExitWith{kExitConfig, std::string("no videos in the ") +
                                    (eval_split ? "eval" : "train") + " split"};
  std::vector<std::vector<double>> scores(indices.size());
  std::vector<std::vector<std::uint8_t>> labels(indices.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& video = data.videos[indices[i]];
      const auto s = asf::multi_view_predict(video, backbone, params, mask, plan);
      scores[i].assign(s.data().begin(), s.data().end());
      labels[i] = video.labels;
    }
  };
  if (threads <= 1) {
    work(0, indices.size());
  } else {
    // per-video outputs land in preassigned slots; thread count cannot
    // change the result
    std::vector<std::thread> pool;
    const std::size_t chunk = (indices.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(indices.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return asf::mean_average_precision(scores, labels);
}

int run_eval(const asf::RunConfig& cfg, const std::string& checkpoint,
             bool rate_table, const std::string& split) {
  if (split != "train" && split != "eval")
    throw ExitWith{kExitConfig, "--split must be train or eval"};
  auto data = load_data(cfg);
  auto params = load_matching_checkpoint(checkpoint, cfg, data.spec);
  const asf::Tensor<float> mask = training_mask(data);
  asf::BackboneStub backbone(data.spec.channels, params.config().backbone_channels,
                             cfg.temporal_pool, cfg.backbone_seed);

  const auto report =
      evaluate_split(data, backbone, params, mask, cfg.view_plan(),
                     split == "eval", cfg.threads);

  std::filesystem::create_directories(cfg.output_dir);
  const auto csv_path = std::filesystem::path(cfg.output_dir) / "eval.csv";
  try {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw asf::IoError("cannot write " + csv_path.string());
    csv << "activity,ap\n";
    for (std::size_t a = 0; a < report.ap.size(); ++a)
      if (report.positives[a] > 0) csv << a << "," << report.ap[a] << "\n";
  } catch (const asf::IoError& e) {
    throw ExitWith{kExitIo, e.what()};
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "split=" << split << " mAP " << report.map << "\n";

  if (rate_table) {
    const std::size_t total = cfg.views_r2 + cfg.views_r4 + cfg.views_r8;
    std::cout << "rate comparison (" << total << " views each):\n";
    for (std::size_t r : {std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
      asf::ViewPlan plan = asf::ViewPlan::standard(
          data.spec.t_full, r == 2 ? total : 0, r == 4 ? total : 0,
          r == 8 ? total : 0);
      const auto rep = evaluate_split(data, backbone, params, mask, plan,
                                      split == "eval", cfg.threads);
      std::cout << "  r=" << r << " only: mAP " << rep.map << "\n";
    }
    std::cout << "  mixed " << cfg.views_r2 << "/" << cfg.views_r4 << "/"
              << cfg.views_r8 << ": mAP " << report.map << "\n";
  }
  return 0;
}

// --- params ------------------------------------------------------------

int run_params(const asf::RunConfig& cfg, bool paper_table) {
  asf::HeadConfig head = cfg.head;
  head.activities = cfg.dataset.activities;
  const auto b = asf::count_parameters_breakdown(head);
  std::cout << "head parameters (C=" << head.backbone_channels
            << ", C'=" << head.feature_channels << ", K=" << head.observations
            << ", A=" << head.activities << ", n=" << head.groups << ")\n";
  std::cout << "  observation banks (g^a,g^b,g^g): " << b.observation_banks << "\n";
  std::cout << "  activity queries:                " << b.activity_queries << "\n";
  std::cout << "  correlation projections:         " << b.correlation_projections
            << "\n";
  std::cout << "  output layer:                    " << b.output_layer << "\n";
  std::cout << "  total:                           " << b.total() << " ("
            << human_millions(b.total()) << ")\n";

  if (paper_table) {
    // published sweeps vary the observation-generation bank; the query and
    // output-layer parameters are backbone/label constants not included in
    // those columns
    asf::HeadConfig full_scale;  // C=2048, C'=128, K=64, A=157, n=32 defaults
    std::cout << "\ngroup-size sweep (C=2048, C'=128, K=64, A=157):\n";
    std::cout << "  n     obs-params        published\n";
    const std::pair<std::size_t, const char*> n_rows[] = {
        {1, "50.4M"}, {8, "6.3M"}, {32, "1.6M"}, {64, "0.8M"}};
    for (const auto& [n, published] : n_rows) {
      asf::HeadConfig c = full_scale;
      c.groups = n;
      const auto bb = asf::count_parameters_breakdown(c);
      std::printf("  %-5zu %-10zu %-7s %s\n", n, bb.observation_banks,
                  human_millions(bb.observation_banks).c_str(), published);
    }
    std::cout << "observation-count sweep (n=32):\n";
    std::cout << "  K     obs-params        published\n";
    const std::pair<std::size_t, const char*> k_rows[] = {
        {16, "0.4M"}, {32, "0.8M"}, {64, "1.6M"}, {128, "3.2M"}};
    for (const auto& [k, published] : k_rows) {
      asf::HeadConfig c = full_scale;
      c.observations = k;
      const auto bb = asf::count_parameters_breakdown(c);
      std::printf("  %-5zu %-10zu %-7s %s\n", k, bb.observation_banks,
                  human_millions(bb.observation_banks).c_str(), published);
    }
    const auto bb = asf::count_parameters_breakdown(full_scale);
    std::cout << "full head total (157 activities): " << bb.total() << " ("
              << human_millions(bb.total()) << ") published 1.6M\n";
  }
  return 0;
}

// --- visualize ---------------------------------------------------------

int run_visualize(const asf::RunConfig& cfg, const std::string& checkpoint,
                  std::size_t video_id, std::vector<std::size_t> activities) {
  auto data = load_data(cfg);
  if (video_id >= data.videos.size())
    throw ExitWith{kExitMissing, "video " + std::to_string(video_id) +
                                     " not in manifest (have " +
                                     std::to_string(data.videos.size()) + ")"};
  for (auto a : activities)
    if (a >= data.spec.activities)
      throw ExitWith{kExitMissing, "activity " + std::to_string(a) +
                                       " out of range (A=" +
                                       std::to_string(data.spec.activities) + ")"};
  auto params = load_matching_checkpoint(checkpoint, cfg, data.spec);
  const asf::Tensor<float> mask = training_mask(data);
  asf::BackboneStub backbone(data.spec.channels, params.config().backbone_channels,
                             cfg.temporal_pool, cfg.backbone_seed);

  // canonical whole-video view: largest rate that fits, offset 0
  std::size_t rate = data.spec.t_full / 32;
  if (rate == 0) throw ExitWith{kExitConfig, "t_full too small for one clip"};
  const auto& video = data.videos[video_id];
  auto ff = backbone.forward(asf::sample_clip(video, rate, 0));
  asf::Rng dummy(0);
  const asf::DropoutSpec drop(params.config().dropout_rate,
                              asf::DropoutMode::Inference);
  auto trace = asf::head_forward(ff, params, mask, drop, dummy);
  auto maps = asf::export_activity_maps(
      trace.features.attn_a->value, trace.obs.attn_o->value, ff.t, ff.w, ff.h,
      activities, data.spec.activities);

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path out(cfg.output_dir);
  try {
    std::ofstream boxes(out / "boxes.csv", std::ios::trunc);
    if (!boxes) throw asf::IoError("cannot write " + (out / "boxes.csv").string());
    boxes << "activity,t,w_min,h_min,w_max,h_max\n";
    for (const auto& am : maps) {
      const std::string stem = "map_" + std::to_string(am.activity);
      asf::write_tensor(out / (stem + ".asft"), am.map);
      for (std::size_t t = 0; t < ff.t; ++t) {
        asf::Tensor<float> frame({ff.w, ff.h});
        std::copy(am.map.raw() + t * ff.w * ff.h,
                  am.map.raw() + (t + 1) * ff.w * ff.h, frame.raw());
        asf::write_pgm(out / (stem + "_t" + std::to_string(t) + ".pgm"), frame);
      }
      for (const auto& bx : am.boxes)
        boxes << bx.activity << "," << bx.t << "," << bx.w_min << "," << bx.h_min
              << "," << bx.w_max << "," << bx.h_max << "\n";

      // report localization against ground truth when the activity is
      // positive in this video
      for (const auto& region : video.regions) {
        if (region.activity != am.activity) continue;
        const auto loc =
            asf::localization_score(am.raw, region, rate, 0, cfg.temporal_pool);
        std::cout << "activity " << am.activity << ": mass in truth region "
                  << loc.mass_in_region << " (uniform baseline "
                  << loc.region_fraction << ")\n";
      }
    }
  } catch (const asf::IoError& e) {
    throw ExitWith{kExitIo, e.what()};
  }
  std::cout << "wrote maps for " << maps.size() << " activities to "
            << cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"activity-specific feature head experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string split = "eval";
  bool paper_table = false;
  bool rate_table = false;
  std::size_t video_id = 0;
  std::vector<std::size_t> vis_activities;

  auto add_common = [&](CLI::App* sub, bool need_config = true) {
    auto* opt = sub->add_option("config", config_path, "run config file");
    if (need_config) opt->required();
    sub->add_option("--set", overrides, "override config keys (key=value)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  auto* train_cmd = app.add_subcommand("train", "run the two-phase training");
  add_common(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "multi-view evaluation (mAP)");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--split", split, "train|eval (default eval)");
  eval_cmd->add_flag("--rate-table", rate_table,
                     "also report single-rate vs multi-rate mAP");
  auto* params_cmd = app.add_subcommand("params", "parameter-count breakdown");
  add_common(params_cmd, /*need_config=*/false);
  params_cmd->add_flag("--paper-table", paper_table,
                       "print the published sweep tables");
  auto* vis = app.add_subcommand("visualize", "export activity-specific maps");
  add_common(vis);
  vis->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  vis->add_option("--video", video_id, "video index in the manifest")->required();
  vis->add_option("--activity", vis_activities, "activity indices")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    asf::RunConfig cfg = [&] {
      if (config_path.empty()) {
        // params without a config file: defaults plus overrides
        try {
          std::istringstream empty;
          return asf::parse_run_config(empty, overrides);
        } catch (const asf::ConfigError& e) {
          throw ExitWith{kExitConfig, e.what()};
        }
      }
      return load_config(config_path, overrides);
    }();
    if (gen->parsed()) return run_gen_data(cfg);
    if (train_cmd->parsed()) return run_train(cfg);
    if (eval_cmd->parsed()) return run_eval(cfg, checkpoint, rate_table, split);
    if (params_cmd->parsed()) return run_params(cfg, paper_table);
    if (vis->parsed()) return run_visualize(cfg, checkpoint, video_id, vis_activities);
  } catch (const ExitWith& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const asf::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
