#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "asf/dataset.hpp"
#include "asf/head.hpp"
#include "asf/train.hpp"

namespace asf {

// One merged experiment configuration, parsed from `key = value` lines.
// Unknown keys are rejected. Every field has a documented default (see
// README); command-line `--set key=value` pairs override file values.
struct RunConfig {
  DatasetSpec dataset;
  HeadConfig head;
  TrainConfig train;

  std::size_t temporal_pool = 8;
  std::uint64_t backbone_seed = 42;
  std::uint64_t init_seed = 3;

  std::size_t views_r2 = 9, views_r4 = 12, views_r8 = 9;

  std::string data_dir = "data";
  std::string output_dir = "out";

  bool disable_correlation = false;
  bool disable_activity_specific = false;
  std::size_t threads = 1;

  RunConfig();

  HeadVariant variant() const {
    return {!disable_correlation, !disable_activity_specific};
  }
  ViewPlan view_plan() const {
    return ViewPlan::standard(dataset.t_full, views_r2, views_r4, views_r8);
  }
  BackboneStub make_backbone() const {
    return BackboneStub(dataset.channels, head.backbone_channels, temporal_pool,
                        backbone_seed);
  }

  void validate() const;
};

RunConfig parse_run_config(std::istream& in,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

}  // namespace asf
