// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/dataset.hpp"
#include "b2t/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace b2t {

inline constexpr double kNormEpsilon = 1e-8;

/// Per-channel population mean/std over every timestep of every trial in a block.
struct BlockStats {
  std::string block_id;
  RowVector mean;
  RowVector std;
};

struct AugmentationConfig {
  double sigma_element = 1.0;
  double sigma_channel = 0.2;
  double smooth_sigma = 2.0;
  int smooth_radius = 0;  // 0 selects ceil(3 * smooth_sigma)

  int radius() const;
  void validate() const;
};

BlockStats compute_block_stats(const std::string& block_id, const std::vector<Matrix>& signals);

/// (x - mean) / (std + eps), per channel.
Matrix normalize(const Matrix& signal, const BlockStats& stats);

/// Adds i.i.d. N(0, sigma_element^2) per element and one N(0, sigma_channel^2)
/// offset per channel shared across time. Channel offsets are drawn first.
Matrix add_white_noise(const Matrix& signal, const AugmentationConfig& config, Rng& rng);

/// Truncated Gaussian convolution along time, renormalized over the taps
/// that fall inside the sequence.
Matrix gaussian_smooth(const Matrix& signal, double sigma, int radius);

/// smooth(noise(normalize(x)))
Matrix training_view(const Matrix& raw, const BlockStats& stats, const AugmentationConfig& config, Rng& rng);
/// smooth(normalize(x))
Matrix eval_view(const Matrix& raw, const BlockStats& stats, const AugmentationConfig& config);

using BlockStatsTable = std::map<std::string, BlockStats>;

BlockStatsTable compute_all_block_stats(const DatasetManifest& manifest);

inline constexpr const char* kBlockStatsFile = "block_stats.json";

void save_block_stats(const BlockStatsTable& table, const std::filesystem::path& file);
BlockStatsTable load_block_stats(const std::filesystem::path& file);

/// Reads the sidecar next to the manifest, computing and writing it when absent.
BlockStatsTable load_or_compute_block_stats(const DatasetManifest& manifest);

}  // namespace b2t
