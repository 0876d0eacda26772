// SPDX-License-Identifier: Apache-2.0
#include "b2t/dataset.hpp"

#include "b2t/io.hpp"
#include "b2t/textproc.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace b2t {

static_assert(std::endian::native == std::endian::little, "signal files are little-endian float32");

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }
std::string_view to_string(Condition c) { return c == Condition::vocal ? "vocal" : "silent"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("split must be train|test, got '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
  if (s == "vocal") return Condition::vocal;
  if (s == "silent") return Condition::silent;
  throw std::invalid_argument("condition must be vocal|silent, got '" + std::string(s) + "'");
}

namespace {

const std::set<std::string>& trial_keys() {
  static const std::set<std::string> keys = {"trial_id",      "session_id",  "block_id", "split", "condition",
                                             "transcription", "signal_path", "T",        "F"};
  return keys;
}

Trial parse_trial(const nlohmann::json& j, std::size_t line_no) {
  const std::string where =
      j.contains("trial_id") && j["trial_id"].is_string() ? "trial " + j["trial_id"].get<std::string>()
                                                            : "line " + std::to_string(line_no);
  auto fail = [&](const std::string& what) { throw DatasetError("schema violation: " + where + ": " + what); };
  if (!j.is_object()) fail("record is not an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (trial_keys().count(it.key()) == 0) fail("unknown key '" + it.key() + "'");
  }
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) fail(std::string("missing string field '") + key + "'");
    auto v = j[key].get<std::string>();
    if (v.empty()) fail(std::string("empty field '") + key + "'");
    return v;
  };
  auto pos_int = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) fail(std::string("missing integer field '") + key + "'");
    const auto v = j[key].get<long long>();
    if (v < 1 || v > (1LL << 30)) fail(std::string("field '") + key + "' must be a positive integer");
    return static_cast<int>(v);
  };

  Trial t;
  t.trial_id = str("trial_id");
  t.session_id = str("session_id");
  t.block_id = str("block_id");
  try {
    t.split = parse_split(str("split"));
    t.condition = parse_condition(str("condition"));
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  t.transcription = str("transcription");
  t.signal_path = str("signal_path");
  t.T = pos_int("T");
  t.F = pos_int("F");
  return t;
}

}  // namespace

std::string trial_to_json_line(const Trial& t) {
  nlohmann::ordered_json j;
  j["trial_id"] = t.trial_id;
  j["session_id"] = t.session_id;
  j["block_id"] = t.block_id;
  j["split"] = to_string(t.split);
  j["condition"] = to_string(t.condition);
  j["transcription"] = t.transcription;
  j["signal_path"] = t.signal_path;
  j["T"] = t.T;
  j["F"] = t.F;
  return j.dump();
}

DatasetManifest load_manifest(const std::filesystem::path& path, std::optional<int> expected_channels) {
  namespace fs = std::filesystem;
  const fs::path file = fs::is_directory(path) ? path / kManifestFile : path;
  if (!fs::exists(file)) throw DatasetError("missing manifest: " + file.string());

  DatasetManifest m;
  m.root = file.parent_path();
  std::istringstream in(io::read_file(file));
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError("schema violation: line " + std::to_string(line_no) + ": " + e.what());
    }
    Trial t = parse_trial(j, line_no);
    if (!ids.insert(t.trial_id).second) throw DatasetError("duplicate trial_id: " + t.trial_id);
    m.trials.push_back(std::move(t));
  }
  if (m.trials.empty()) throw DatasetError("empty manifest");

  m.channel_count = expected_channels.value_or(m.trials.front().F);
  std::set<std::string> sessions;
  std::set<std::string> train_sessions;
  for (const Trial& t : m.trials) {
    if (t.F != m.channel_count) {
      throw DatasetError("channel count mismatch: trial " + t.trial_id + " has F=" + std::to_string(t.F) +
                         ", corpus uses " + std::to_string(m.channel_count));
    }
    const fs::path sig = m.signal_file(t);
    if (!fs::exists(sig)) throw DatasetError("missing signal file: trial " + t.trial_id + " (" + sig.string() + ")");
    const auto expect = static_cast<std::uintmax_t>(4) * static_cast<std::uintmax_t>(t.T) * t.F;
    if (fs::file_size(sig) != expect) throw DatasetError("size mismatch: trial " + t.trial_id);
    sessions.insert(t.session_id);
    if (t.split == Split::train) train_sessions.insert(t.session_id);
  }
  for (const auto& s : sessions) {
    if (train_sessions.count(s) == 0) throw DatasetError("schema violation: session " + s + " has no train trial");
  }
  return m;
}

Matrix load_trial_signal(const DatasetManifest& manifest, const Trial& trial) {
  const auto bytes = io::read_file(manifest.signal_file(trial));
  const std::size_t n = static_cast<std::size_t>(trial.T) * static_cast<std::size_t>(trial.F);
  if (bytes.size() != 4 * n) throw DatasetError("size mismatch: trial " + trial.trial_id);
  Matrix out(trial.T, trial.F);
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < n; ++i) {
    float v = 0.0F;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    if (!std::isfinite(v)) {
      if (bad.size() < 10) {
        bad.push_back("(" + std::to_string(i / trial.F) + "," + std::to_string(i % trial.F) + ")");
      }
    }
    out.data()[i] = static_cast<double>(v);
  }
  if (!bad.empty()) {
    std::string msg = "trial " + trial.trial_id + ": non-finite value at";
    for (const auto& b : bad) msg += " " + b;
    throw DatasetError(msg);
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, std::vector<Trial> trials, const std::vector<Matrix>& signals) {
  if (trials.size() != signals.size()) throw std::invalid_argument("write_dataset: trial/signal count mismatch");
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    Trial& t = trials[i];
    const Matrix& s = signals[i];
    t.T = static_cast<int>(s.rows());
    t.F = static_cast<int>(s.cols());
    t.signal_path = t.trial_id + ".f32";
    std::string bytes(static_cast<std::size_t>(s.size()) * 4, '\0');
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      const auto v = static_cast<float>(s.data()[k]);
      std::memcpy(bytes.data() + 4 * k, &v, 4);
    }
    io::write_file_atomic(dir / t.signal_path, bytes);
    manifest += trial_to_json_line(t);
    manifest += '\n';
  }
  io::write_file_atomic(dir / kManifestFile, manifest);
}

ManifestView subset(const DatasetManifest& manifest, std::optional<Split> split, std::optional<Condition> condition) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < manifest.trials.size(); ++i) {
    const Trial& t = manifest.trials[i];
    if (split && t.split != *split) continue;
    if (condition && t.condition != *condition) continue;
    idx.push_back(i);
  }
  if (idx.empty()) {
    spdlog::warn("subset split={} condition={} is empty", split ? to_string(*split) : "any",
                 condition ? to_string(*condition) : "any");
  }
  return ManifestView(manifest, std::move(idx));
}

namespace {

ConditionStats condition_stats(const DatasetManifest& m, std::optional<Condition> cond) {
  ConditionStats s;
  std::set<std::string> train_words;
  std::set<std::string> test_words;
  for (const Trial& t : m.trials) {
    if (cond && t.condition != *cond) continue;
    auto& words = t.split == Split::train ? train_words : test_words;
    (t.split == Split::train ? s.train_sentences : s.test_sentences) += 1;
    for (auto& w : normalize_for_eval(t.transcription)) words.insert(std::move(w));
  }
  s.train_unique_words = static_cast<long>(train_words.size());
  s.test_unique_words = static_cast<long>(test_words.size());
  long shared = 0;
  for (const auto& w : test_words) shared += train_words.count(w) > 0 ? 1 : 0;
  s.word_overlap = test_words.empty() ? 0.0 : static_cast<double>(shared) / static_cast<double>(test_words.size());
  return s;
}

}  // namespace

ValidationReport validate_dataset(const DatasetManifest& manifest) {
  ValidationReport r;
  r.vocal = condition_stats(manifest, Condition::vocal);
  r.silent = condition_stats(manifest, Condition::silent);
  r.all = condition_stats(manifest, std::nullopt);
  r.total_trials = static_cast<long>(manifest.trials.size());
  if (r.vocal.test_sentences + r.silent.test_sentences == 0) r.warnings.emplace_back("no test trials");
  if (r.silent.train_sentences + r.silent.test_sentences == 0) r.warnings.emplace_back("no silent trials");
  if (r.vocal.train_sentences + r.vocal.test_sentences == 0) r.warnings.emplace_back("no vocal trials");
  for (const Trial& t : manifest.trials) {
    if (normalize_for_eval(t.transcription).empty()) {
      r.warnings.push_back("trial " + t.trial_id + " has no words after normalization");
    }
  }
  return r;
}

std::string ValidationReport::to_table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %10s %10s %12s %12s %8s\n", "", "train", "test", "uniq_train", "uniq_test",
                "overlap");
  os << buf;
  auto row = [&](const char* name, const ConditionStats& s) {
    std::snprintf(buf, sizeof buf, "%-8s %10ld %10ld %12ld %12ld %8.3f\n", name, s.train_sentences, s.test_sentences,
                  s.train_unique_words, s.test_unique_words, s.word_overlap);
    os << buf;
  };
  row("vocal", vocal);
  row("silent", silent);
  row("all", all);
  for (const auto& w : warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace b2t
