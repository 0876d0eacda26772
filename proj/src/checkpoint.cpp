// SPDX-License-Identifier: Apache-2.0
#include "b2t/checkpoint.hpp"

#include "b2t/io.hpp"

#include <bit>
#include <cstring>
#include <set>

namespace b2t {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

std::string_view to_string(TensorDtype d) { return d == TensorDtype::f32 ? "f32" : "f64"; }

TensorDtype parse_dtype(std::string_view s) {
  if (s == "f32") return TensorDtype::f32;
  if (s == "f64") return TensorDtype::f64;
  throw std::invalid_argument("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

const Matrix* TensorDir::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

void round_to_f32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

namespace {

std::string encode_tensor(const Matrix& m, TensorDtype dtype) {
  std::string bytes;
  if (dtype == TensorDtype::f64) {
    bytes.resize(static_cast<std::size_t>(m.size()) * sizeof(double));
    std::memcpy(bytes.data(), m.data(), bytes.size());
  } else {
    bytes.resize(static_cast<std::size_t>(m.size()) * sizeof(float));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const auto f = static_cast<float>(m.data()[i]);
      std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
    }
  }
  return bytes;
}

Matrix decode_tensor(const std::string& bytes, Eigen::Index rows, Eigen::Index cols, TensorDtype dtype,
                     const std::string& name) {
  const std::size_t width = dtype == TensorDtype::f64 ? sizeof(double) : sizeof(float);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * width) {
    throw CheckpointError("tensor file size does not match its shape: " + name);
  }
  Matrix m(rows, cols);
  if (dtype == TensorDtype::f64) {
    std::memcpy(m.data(), bytes.data(), bytes.size());
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
      m.data()[i] = f;
    }
  }
  return m;
}

std::string tensor_file_name(const std::string& name) { return "tensors/" + name + ".bin"; }

}  // namespace

void save_tensor_dir(const fs::path& dir, const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                     TensorDtype dtype, const nlohmann::ordered_json& meta,
                     const std::map<std::string, std::string>& files) {
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path tmp = target.string() + ".tmp";
  const fs::path old = target.string() + ".old";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "tensors");

  nlohmann::ordered_json manifest;
  manifest["format"] = "b2t-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = std::string(to_string(dtype));
  manifest["groups"] = nlohmann::ordered_json::array();
  std::set<std::string> seen;
  for (const auto& [name, m] : tensors) {
    if (!seen.insert(name).second) throw CheckpointError("duplicate tensor group: " + name);
    const std::string bytes = encode_tensor(*m, dtype);
    const std::string file = tensor_file_name(name);
    io::write_file_atomic(tmp / file, bytes);
    manifest["groups"].push_back({{"name", name},
                                  {"file", file},
                                  {"shape", {m->rows(), m->cols()}},
                                  {"sha256", sha256_hex(bytes.data(), bytes.size())}});
  }
  manifest["files"] = nlohmann::ordered_json::array();
  for (const auto& [name, content] : files) {
    fs::create_directories((tmp / name).parent_path());
    io::write_file_atomic(tmp / name, content);
    manifest["files"].push_back({{"name", name}, {"sha256", sha256_hex(content.data(), content.size())}});
  }
  manifest["meta"] = meta;
  io::write_file_atomic(tmp / kCheckpointManifest, manifest.dump(2) + "\n");

  fs::remove_all(old);
  if (fs::exists(target)) fs::rename(target, old);
  fs::rename(tmp, target);
  fs::remove_all(old);
}

void save_tensor_dir(const fs::path& dir, const ParamRefs& tensors, TensorDtype dtype,
                     const nlohmann::ordered_json& meta, const std::map<std::string, std::string>& files) {
  std::vector<std::pair<std::string, const Matrix*>> list;
  list.reserve(tensors.size());
  for (const auto& p : tensors) list.emplace_back(p.name, p.value);
  save_tensor_dir(dir, list, dtype, meta, files);
}

TensorDir load_tensor_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / kCheckpointManifest;
  if (!fs::exists(manifest_path)) throw CheckpointError("not a checkpoint (missing " + manifest_path.string() + ")");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("unreadable checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "b2t-checkpoint") throw CheckpointError("unknown checkpoint format in " + dir.string());

  TensorDir out;
  out.dtype = parse_dtype(manifest.at("dtype").get<std::string>());
  for (const auto& g : manifest.at("groups")) {
    const auto name = g.at("name").get<std::string>();
    const fs::path file = dir / g.at("file").get<std::string>();
    if (!fs::exists(file)) throw CheckpointError("missing tensor file for group " + name);
    const std::string bytes = io::read_file(file);
    if (sha256_hex(bytes.data(), bytes.size()) != g.at("sha256").get<std::string>()) {
      throw CheckpointError("hash mismatch in group " + name);
    }
    const auto shape = g.at("shape");
    out.tensors.emplace_back(name, decode_tensor(bytes, shape.at(0).get<Eigen::Index>(),
                                                 shape.at(1).get<Eigen::Index>(), out.dtype, name));
  }
  for (const auto& f : manifest.at("files")) {
    const auto name = f.at("name").get<std::string>();
    const std::string content = io::read_file(dir / name);
    if (sha256_hex(content.data(), content.size()) != f.at("sha256").get<std::string>()) {
      throw CheckpointError("hash mismatch in file " + name);
    }
    out.files[name] = content;
  }
  out.meta = manifest.at("meta");
  return out;
}

void load_params_into(const TensorDir& stored, const ParamRefs& params, bool allow_extra) {
  std::vector<std::string> problems;
  std::set<std::string> wanted;
  for (const auto& p : params) {
    wanted.insert(p.name);
    const Matrix* m = stored.find(p.name);
    if (m == nullptr) {
      problems.push_back("missing: " + p.name);
    } else if (m->rows() != p.value->rows() || m->cols() != p.value->cols()) {
      problems.push_back("shape mismatch: " + p.name + " expected " + std::to_string(p.value->rows()) + "x" +
                         std::to_string(p.value->cols()) + ", found " + std::to_string(m->rows()) + "x" +
                         std::to_string(m->cols()));
    }
  }
  if (!allow_extra) {
    for (const auto& [name, m] : stored.tensors) {
      if (wanted.count(name) == 0) problems.push_back("unexpected: " + name);
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CheckpointError(msg);
  }
  for (const auto& p : params) *p.value = *stored.find(p.name);
}

}  // namespace b2t
