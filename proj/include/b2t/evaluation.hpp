// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/dataset.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace b2t {

struct ErrorCounts {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_len = 0;

  long errors() const { return substitutions + deletions + insertions; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_len += o.ref_len;
    return *this;
  }
  bool operator==(const ErrorCounts&) const = default;
};

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers diagonal moves, then deletions, then insertions.
ErrorCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

using SequencePair = std::pair<std::vector<std::string>, std::vector<std::string>>;

/// Pooled error rate: total errors over total reference length. Unclipped.
/// Throws when the pooled reference length is zero.
double corpus_wer(const std::vector<SequencePair>& pairs);

/// Same machinery over phoneme symbols.
double phoneme_error_rate(const std::vector<SequencePair>& pairs);

/// Error rate of already-pooled counts.
double error_rate(const ErrorCounts& counts);

struct Transcript {
  std::string text;
  double logprob = 0.0;
  bool truncated = false;
};

/// Maps one test trial to raw hypothesis text. May throw; the trial is then
/// scored as all deletions and flagged.
using Transcriber = std::function<Transcript(const Trial&)>;

struct TrialOutcome {
  std::string trial_id;
  Condition condition = Condition::vocal;
  std::string reference_text;
  std::string hypothesis_text;
  std::vector<std::string> reference;   // normalized
  std::vector<std::string> hypothesis;  // normalized
  double logprob = 0.0;
  bool truncated = false;
  bool failed = false;
  std::string error;
  ErrorCounts counts;
};

struct SubsetScore {
  ErrorCounts counts;
  long trials = 0;
  /// NaN when the subset has no reference words.
  double wer() const;
};

struct EvalReport {
  SubsetScore vocal;
  SubsetScore silent;
  SubsetScore all;
  std::vector<TrialOutcome> trials;

  nlohmann::ordered_json to_json() const;
  /// One aligned block per trial.
  std::string to_text() const;
  /// Vocal / silent / all rows.
  std::string summary_table() const;
};

/// Transcribes every trial, normalizes hypothesis and reference identically
/// and pools the counts per condition.
EvalReport evaluate(const ManifestView& trials, const Transcriber& transcriber);

}  // namespace b2t
