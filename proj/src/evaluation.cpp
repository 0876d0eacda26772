// SPDX-License-Identifier: Apache-2.0
#include "b2t/evaluation.hpp"

#include "b2t/textproc.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <limits>
#include <stdexcept>

namespace b2t {

ErrorCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::vector<long>> d(n + 1, std::vector<long>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const long diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }

  ErrorCounts c;
  c.ref_len = static_cast<long>(n);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

double error_rate(const ErrorCounts& counts) {
  if (counts.ref_len == 0) throw std::invalid_argument("total reference length is zero");
  return static_cast<double>(counts.errors()) / static_cast<double>(counts.ref_len);
}

double corpus_wer(const std::vector<SequencePair>& pairs) {
  ErrorCounts total;
  for (const auto& [ref, hyp] : pairs) total += edit_distance(ref, hyp);
  return error_rate(total);
}

double phoneme_error_rate(const std::vector<SequencePair>& pairs) { return corpus_wer(pairs); }

}  // namespace b2t

namespace b2t {

double SubsetScore::wer() const {
  return counts.ref_len > 0 ? error_rate(counts) : std::numeric_limits<double>::quiet_NaN();
}

EvalReport evaluate(const ManifestView& trials, const Transcriber& transcriber) {
  EvalReport report;
  for (const Trial& t : trials) {
    TrialOutcome o;
    o.trial_id = t.trial_id;
    o.condition = t.condition;
    o.reference_text = t.transcription;
    o.reference = normalize_for_eval(t.transcription);
    try {
      const Transcript tr = transcriber(t);
      o.hypothesis_text = tr.text;
      o.logprob = tr.logprob;
      o.truncated = tr.truncated;
      o.hypothesis = normalize_for_eval(tr.text);
    } catch (const std::exception& e) {
      spdlog::warn("decoding failed for trial {}: {}", t.trial_id, e.what());
      o.failed = true;
      o.error = e.what();
      o.hypothesis_text.clear();
      o.hypothesis.clear();
    }
    o.counts = edit_distance(o.reference, o.hypothesis);
    SubsetScore& part = t.condition == Condition::vocal ? report.vocal : report.silent;
    part.counts += o.counts;
    part.trials += 1;
    report.all.counts += o.counts;
    report.all.trials += 1;
    report.trials.push_back(std::move(o));
  }
  return report;
}

namespace {

nlohmann::ordered_json score_json(const SubsetScore& s) {
  nlohmann::ordered_json j;
  j["trials"] = s.trials;
  j["ref_words"] = s.counts.ref_len;
  j["substitutions"] = s.counts.substitutions;
  j["deletions"] = s.counts.deletions;
  j["insertions"] = s.counts.insertions;
  if (s.counts.ref_len > 0) {
    j["wer"] = s.wer();
  } else {
    j["wer"] = nullptr;
  }
  return j;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string format_rate(const SubsetScore& s) {
  if (s.counts.ref_len == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * s.wer());
  return buf;
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["vocal"] = score_json(vocal);
  j["silent"] = score_json(silent);
  j["all"] = score_json(all);
  j["trials"] = nlohmann::ordered_json::array();
  for (const auto& o : trials) {
    nlohmann::ordered_json t;
    t["trial_id"] = o.trial_id;
    t["condition"] = std::string(to_string(o.condition));
    t["reference"] = join(o.reference);
    t["hypothesis"] = join(o.hypothesis);
    t["hypothesis_raw"] = o.hypothesis_text;
    t["logprob"] = o.logprob;
    t["truncated"] = o.truncated;
    t["failed"] = o.failed;
    if (o.failed) t["error"] = o.error;
    t["substitutions"] = o.counts.substitutions;
    t["deletions"] = o.counts.deletions;
    t["insertions"] = o.counts.insertions;
    t["ref_words"] = o.counts.ref_len;
    j["trials"].push_back(std::move(t));
  }
  return j;
}

std::string EvalReport::to_text() const {
  std::string out;
  for (const auto& o : trials) {
    out += o.trial_id + " [" + std::string(to_string(o.condition)) + "]";
    out += " S=" + std::to_string(o.counts.substitutions) + " D=" + std::to_string(o.counts.deletions) +
           " I=" + std::to_string(o.counts.insertions) + " N=" + std::to_string(o.counts.ref_len);
    if (o.failed) out += " FAILED: " + o.error;
    out += "\n  REF: " + join(o.reference) + "\n  HYP: " + join(o.hypothesis) + "\n";
  }
  return out;
}

std::string EvalReport::summary_table() const {
  std::string out = "subset   trials  ref_words      WER\n";
  for (const auto& [name, s] : {std::pair<const char*, const SubsetScore*>{"vocal", &vocal},
                                {"silent", &silent},
                                {"all", &all}}) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-7s %7ld %10ld %8s\n", name, s->trials, s->counts.ref_len, format_rate(*s).c_str());
    out += buf;
  }
  return out;
}

}  // namespace b2t
