// SPDX-License-Identifier: Apache-2.0
#include "b2t/preprocessing.hpp"

#include "b2t/io.hpp"

#include <json.hpp>

#include <cmath>

namespace b2t {

int AugmentationConfig::radius() const {
  return smooth_radius > 0 ? smooth_radius : static_cast<int>(std::ceil(3.0 * smooth_sigma));
}

void AugmentationConfig::validate() const {
  if (sigma_element < 0 || sigma_channel < 0) throw std::invalid_argument("noise sigmas must be non-negative");
  if (!(smooth_sigma > 0)) throw std::invalid_argument("smooth_sigma must be positive");
  if (smooth_radius < 0) throw std::invalid_argument("smooth_radius must be positive (or 0 for auto)");
}

BlockStats compute_block_stats(const std::string& block_id, const std::vector<Matrix>& signals) {
  if (signals.empty()) throw std::invalid_argument("empty block: " + block_id);
  const Eigen::Index f = signals.front().cols();
  RowVector sum = RowVector::Zero(f);
  double count = 0;
  for (const Matrix& s : signals) {
    if (s.cols() != f) throw ShapeError("block " + block_id + ": channel count differs between trials");
    sum += s.colwise().sum();
    count += static_cast<double>(s.rows());
  }
  BlockStats st{block_id, sum / count, RowVector::Zero(f)};
  RowVector sq = RowVector::Zero(f);
  for (const Matrix& s : signals) sq += (s.rowwise() - st.mean).array().square().matrix().colwise().sum();
  st.std = (sq / count).array().sqrt();
  return st;
}

Matrix normalize(const Matrix& signal, const BlockStats& stats) {
  if (signal.cols() != stats.mean.cols()) {
    throw ShapeError("normalize: signal has " + std::to_string(signal.cols()) + " channels, stats have " +
                     std::to_string(stats.mean.cols()));
  }
  const RowVector denom = stats.std.array() + kNormEpsilon;
  return ((signal.rowwise() - stats.mean).array().rowwise() / denom.array()).matrix();
}

Matrix add_white_noise(const Matrix& signal, const AugmentationConfig& config, Rng& rng) {
  if (config.sigma_element < 0 || config.sigma_channel < 0) {
    throw std::invalid_argument("noise sigmas must be non-negative");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out = signal;
  RowVector offset(signal.cols());
  for (Eigen::Index c = 0; c < signal.cols(); ++c) offset[c] = config.sigma_channel * normal(rng);
  for (Eigen::Index t = 0; t < signal.rows(); ++t) {
    for (Eigen::Index c = 0; c < signal.cols(); ++c) out(t, c) += config.sigma_element * normal(rng) + offset[c];
  }
  return out;
}

Matrix gaussian_smooth(const Matrix& signal, double sigma, int radius) {
  if (!(sigma > 0)) throw std::invalid_argument("smooth sigma must be positive");
  if (radius < 1) throw std::invalid_argument("smooth radius must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  for (int j = -radius; j <= radius; ++j) {
    w[static_cast<std::size_t>(j + radius)] = std::exp(-0.5 * (j * j) / (sigma * sigma));
  }
  const Eigen::Index T = signal.rows();
  Matrix out = Matrix::Zero(T, signal.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    double norm = 0;
    for (int j = -radius; j <= radius; ++j) {
      const Eigen::Index s = t + j;
      if (s < 0 || s >= T) continue;
      const double wj = w[static_cast<std::size_t>(j + radius)];
      out.row(t) += wj * signal.row(s);
      norm += wj;
    }
    out.row(t) /= norm;
  }
  return out;
}

Matrix training_view(const Matrix& raw, const BlockStats& stats, const AugmentationConfig& config, Rng& rng) {
  return gaussian_smooth(add_white_noise(normalize(raw, stats), config, rng), config.smooth_sigma, config.radius());
}

Matrix eval_view(const Matrix& raw, const BlockStats& stats, const AugmentationConfig& config) {
  return gaussian_smooth(normalize(raw, stats), config.smooth_sigma, config.radius());
}

BlockStatsTable compute_all_block_stats(const DatasetManifest& manifest) {
  std::map<std::string, std::vector<const Trial*>> blocks;
  for (const Trial& t : manifest.trials) blocks[t.block_id].push_back(&t);
  BlockStatsTable table;
  for (const auto& [id, trials] : blocks) {
    std::vector<Matrix> signals;
    signals.reserve(trials.size());
    for (const Trial* t : trials) signals.push_back(load_trial_signal(manifest, *t));
    table.emplace(id, compute_block_stats(id, signals));
  }
  return table;
}

void save_block_stats(const BlockStatsTable& table, const std::filesystem::path& file) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [id, st] : table) {
    j[id]["mean"] = std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size());
    j[id]["std"] = std::vector<double>(st.std.data(), st.std.data() + st.std.size());
  }
  io::write_file_atomic(file, j.dump() + "\n");
}

BlockStatsTable load_block_stats(const std::filesystem::path& file) {
  const auto j = nlohmann::json::parse(io::read_file(file));
  BlockStatsTable table;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto mean = it.value().at("mean").get<std::vector<double>>();
    const auto std = it.value().at("std").get<std::vector<double>>();
    if (mean.size() != std.size()) throw std::runtime_error("block stats sidecar: length mismatch in " + it.key());
    BlockStats st{it.key(), RowVector(static_cast<Eigen::Index>(mean.size())),
                  RowVector(static_cast<Eigen::Index>(std.size()))};
    for (std::size_t i = 0; i < mean.size(); ++i) {
      st.mean[static_cast<Eigen::Index>(i)] = mean[i];
      st.std[static_cast<Eigen::Index>(i)] = std[i];
    }
    table.emplace(it.key(), std::move(st));
  }
  return table;
}

BlockStatsTable load_or_compute_block_stats(const DatasetManifest& manifest) {
  const auto file = manifest.root / kBlockStatsFile;
  if (std::filesystem::exists(file)) {
    auto table = load_block_stats(file);
    bool complete = true;
    for (const Trial& t : manifest.trials) {
      auto it = table.find(t.block_id);
      complete = complete && it != table.end() && it->second.mean.size() == manifest.channel_count;
    }
    if (complete) return table;
  }
  auto table = compute_all_block_stats(manifest);
  save_block_stats(table, file);
  return table;
}

}  // namespace b2t
