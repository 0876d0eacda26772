// SPDX-License-Identifier: Apache-2.0
#include "b2t/feature_extractor.hpp"

#include <cmath>
#include <limits>

namespace b2t {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

int ctc_min_frames(const LabelSequence& target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1] ? 1 : 0;
  return n;
}

double ctc_loss(const Matrix& logits, const LabelSequence& target, Matrix* dlogits) {
  const auto T = static_cast<int>(logits.rows());
  const auto C = static_cast<int>(logits.cols());
  for (int l : target) {
    if (l <= kBlankId || l >= C) throw std::invalid_argument("ctc target id out of range: " + std::to_string(l));
  }
  if (target.empty()) throw std::invalid_argument("empty target");
  if (T < ctc_min_frames(target)) {
    throw NoValidAlignment("no valid alignment: " + std::to_string(T) + " frames for target needing " +
                           std::to_string(ctc_min_frames(target)));
  }

  const Matrix lp = log_softmax_rows(logits);
  const int S = 2 * static_cast<int>(target.size()) + 1;
  auto label = [&](int s) { return s % 2 == 0 ? kBlankId : target[static_cast<std::size_t>(s / 2)]; };
  auto can_skip = [&](int s) { return s >= 2 && s % 2 == 1 && label(s) != label(s - 2); };

  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, label(0));
  if (S > 1) alpha(0, 1) = lp(0, label(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, label(s));
    }
  }
  const double log_p = log_add(alpha(T - 1, S - 1), S > 1 ? alpha(T - 1, S - 2) : kNegInf);
  if (log_p == kNegInf) throw NoValidAlignment("no valid alignment");

  if (dlogits != nullptr) {
    Matrix beta = Matrix::Constant(T, S, kNegInf);
    beta(T - 1, S - 1) = lp(T - 1, label(S - 1));
    if (S > 1) beta(T - 1, S - 2) = lp(T - 1, label(S - 2));
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double b = beta(t + 1, s);
        if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
        if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2));
        beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, label(s));
      }
    }
    // d(-log p)/d logit(t,k) = softmax(t,k) - sum_{s: label(s)=k} posterior(t,s)
    *dlogits = lp.array().exp().matrix();
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < S; ++s) {
        const double ab = alpha(t, s) + beta(t, s);
        if (ab == kNegInf) continue;
        (*dlogits)(t, label(s)) -= std::exp(ab - lp(t, label(s)) - log_p);
      }
    }
  }
  return -log_p;
}

LabelSequence ctc_greedy_decode(const Matrix& logits) {
  LabelSequence out;
  int prev = -1;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(t, k) > logits(t, best)) best = k;
    }
    const int id = static_cast<int>(best);
    if (id != prev && id != kBlankId) out.push_back(id);
    prev = id;
  }
  return out;
}

}  // namespace b2t
