// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

enum class TensorDtype { f32, f64 };

std::string_view to_string(TensorDtype d);
TensorDtype parse_dtype(std::string_view s);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointManifest = "manifest.json";

/// Contents of a tensor directory: named groups in manifest order, free-form
/// metadata, and auxiliary files stored verbatim.
struct TensorDir {
  TensorDtype dtype = TensorDtype::f64;
  std::vector<std::pair<std::string, Matrix>> tensors;
  nlohmann::ordered_json meta;
  std::map<std::string, std::string> files;

  const Matrix* find(const std::string& name) const;
};

/// Writes `manifest.json` plus one little-endian raw file per group into a
/// temporary sibling directory and renames it over `dir`.
void save_tensor_dir(const std::filesystem::path& dir, const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                     TensorDtype dtype, const nlohmann::ordered_json& meta,
                     const std::map<std::string, std::string>& files = {});
void save_tensor_dir(const std::filesystem::path& dir, const ParamRefs& tensors, TensorDtype dtype,
                     const nlohmann::ordered_json& meta, const std::map<std::string, std::string>& files = {});

/// Verifies every hash before returning. A mismatch names the group.
TensorDir load_tensor_dir(const std::filesystem::path& dir);

/// Copies stored groups into `params` by name. Missing groups, shape
/// mismatches and (unless `allow_extra`) unexpected groups are all collected
/// into a single error.
void load_params_into(const TensorDir& stored, const ParamRefs& params, bool allow_extra);

/// Rounds every element to the nearest float.
void round_to_f32(Matrix& m);

}  // namespace b2t
