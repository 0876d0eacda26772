// SPDX-License-Identifier: Apache-2.0
#include "b2t/feature_extractor.hpp"

#include <cmath>

namespace b2t {

void FeatureExtractorConfig::validate() const {
  if (input_channels < 1) throw std::invalid_argument("feature_extractor: input_channels must be positive");
  if (num_layers < 1) throw std::invalid_argument("feature_extractor: num_layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("feature_extractor: hidden must be positive");
  if (stack_s < 1 || stack_s > stack_k) throw std::invalid_argument("feature_extractor: need 1 <= stack_s <= stack_k");
}

FeatureExtractorConfig FeatureExtractorConfig::full_scale(int channels) {
  FeatureExtractorConfig c;
  c.input_channels = channels;
  c.num_layers = 5;
  c.hidden = 1024;
  return c;
}

Matrix stack_frames(const Matrix& signal, int k, int s) {
  if (k < 1 || s < 1) throw std::invalid_argument("stack_frames: k and s must be positive");
  const auto T = static_cast<int>(signal.rows());
  if (T < k) {
    throw SequenceTooShort("sequence too short: T=" + std::to_string(T) + " < k=" + std::to_string(k));
  }
  const int tb = (T - k) / s + 1;
  const auto F = signal.cols();
  Matrix out(tb, F * k);
  for (int i = 0; i < tb; ++i) {
    for (int j = 0; j < k; ++j) out.block(i, j * F, 1, F) = signal.row(i * s + j);
  }
  return out;
}

GruCell GruCell::create(int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCell c;
  c.w_ih = Matrix(in, 3 * hidden);
  c.w_hh = Matrix(hidden, 3 * hidden);
  c.b_ih = Matrix(1, 3 * hidden);
  c.b_hh = Matrix(1, 3 * hidden);
  fill_uniform(c.w_ih, bound, rng);
  fill_uniform(c.w_hh, bound, rng);
  fill_uniform(c.b_ih, bound, rng);
  fill_uniform(c.b_hh, bound, rng);
  return c;
}

GruCell GruCell::zeros_like() const {
  return {b2t::zeros_like(w_ih), b2t::zeros_like(w_hh), b2t::zeros_like(b_ih), b2t::zeros_like(b_hh)};
}

void GruCell::named_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".w_ih", &w_ih});
  out.push_back({prefix + ".w_hh", &w_hh});
  out.push_back({prefix + ".b_ih", &b_ih});
  out.push_back({prefix + ".b_hh", &b_hh});
}

Matrix gru_forward(const GruCell& cell, const Matrix& x, bool reverse, GruTrace* trace) {
  const int H = cell.hidden();
  const auto T = x.rows();
  Matrix xi = x * cell.w_ih;
  xi.rowwise() += cell.b_ih.row(0);

  Matrix out(T, H);
  if (trace != nullptr) {
    trace->x = x;
    trace->reverse = reverse;
    trace->h_prev.resize(T, H);
    trace->r.resize(T, H);
    trace->z.resize(T, H);
    trace->n.resize(T, H);
    trace->hh_n.resize(T, H);
  }
  RowVector h = RowVector::Zero(H);
  RowVector hh(3 * H);
  RowVector r(H), z(H), n(H);
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index t = reverse ? T - 1 - step : step;
    hh.noalias() = h * cell.w_hh;
    hh += cell.b_hh.row(0);
    for (int j = 0; j < H; ++j) {
      r[j] = sigmoid(xi(t, j) + hh[j]);
      z[j] = sigmoid(xi(t, H + j) + hh[H + j]);
      n[j] = std::tanh(xi(t, 2 * H + j) + r[j] * hh[2 * H + j]);
    }
    if (trace != nullptr) {
      trace->h_prev.row(t) = h;
      trace->r.row(t) = r;
      trace->z.row(t) = z;
      trace->n.row(t) = n;
      trace->hh_n.row(t) = hh.segment(2 * H, H);
    }
    h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
    out.row(t) = h;
  }
  return out;
}

Matrix gru_backward(const GruCell& cell, const GruTrace& tr, const Matrix& dout, GruCell& grads) {
  const int H = cell.hidden();
  const auto T = dout.rows();
  Matrix dxi(T, 3 * H);
  RowVector dh_carry = RowVector::Zero(H);
  RowVector dhh(3 * H);
  for (Eigen::Index step = T - 1; step >= 0; --step) {
    const Eigen::Index t = tr.reverse ? T - 1 - step : step;
    const RowVector dh = dout.row(t) + dh_carry;
    for (int j = 0; j < H; ++j) {
      const double r = tr.r(t, j);
      const double z = tr.z(t, j);
      const double n = tr.n(t, j);
      const double dn_pre = dh[j] * (1.0 - z) * (1.0 - n * n);
      const double dz_pre = dh[j] * (tr.h_prev(t, j) - n) * z * (1.0 - z);
      const double dr_pre = dn_pre * tr.hh_n(t, j) * r * (1.0 - r);
      dxi(t, j) = dr_pre;
      dxi(t, H + j) = dz_pre;
      dxi(t, 2 * H + j) = dn_pre;
      dhh[j] = dr_pre;
      dhh[H + j] = dz_pre;
      dhh[2 * H + j] = dn_pre * r;
    }
    grads.w_hh.noalias() += tr.h_prev.row(t).transpose() * dhh;
    grads.b_hh += dhh;
    dh_carry = (dh.array() * tr.z.row(t).array()).matrix();
    dh_carry.noalias() += dhh * cell.w_hh.transpose();
  }
  grads.w_ih.noalias() += tr.x.transpose() * dxi;
  grads.b_ih += dxi.colwise().sum();
  return dxi * cell.w_ih.transpose();
}

FeatureExtractor FeatureExtractor::create(const FeatureExtractorConfig& config,
                                          const std::vector<std::string>& sessions, Rng& rng) {
  config.validate();
  FeatureExtractor fe;
  fe.config = config;
  for (const auto& s : sessions) fe.day_layers.emplace(s, Linear::identity(config.input_dim()));
  int in = config.input_dim();
  for (int l = 0; l < config.num_layers; ++l) {
    for (int d = 0; d < config.directions(); ++d) fe.cells.push_back(GruCell::create(in, config.hidden, rng));
    in = config.output_dim();
  }
  return fe;
}

Matrix FeatureExtractor::run_gru(Matrix x, ExtractorTrace* trace) const {
  const int dirs = config.directions();
  const int H = config.hidden;
  if (trace != nullptr) trace->cells.assign(cells.size(), {});
  for (int l = 0; l < config.num_layers; ++l) {
    Matrix out(x.rows(), H * dirs);
    for (int d = 0; d < dirs; ++d) {
      const auto idx = static_cast<std::size_t>(l * dirs + d);
      out.middleCols(d * H, H) =
          gru_forward(cells[idx], x, d == 1, trace != nullptr ? &trace->cells[idx] : nullptr);
    }
    x = std::move(out);
  }
  return x;
}

Matrix FeatureExtractor::forward(const Matrix& signal, const std::string& session, ExtractorTrace* trace) const {
  if (signal.cols() != config.input_channels) {
    throw ShapeError("feature extractor expects " + std::to_string(config.input_channels) + " channels, got " +
                     std::to_string(signal.cols()));
  }
  Matrix stacked = stack_frames(signal, config.stack_k, config.stack_s);
  Matrix day_out;
  bool fallback = false;
  auto it = day_layers.find(session);
  if (it != day_layers.end()) {
    day_out = it->second.forward(stacked);
  } else if (config.average_unknown_session && !day_layers.empty()) {
    Linear avg = day_layers.begin()->second.zeros_like();
    for (const auto& [_, layer] : day_layers) {
      avg.weight += layer.weight;
      avg.bias += layer.bias;
    }
    const double n = static_cast<double>(day_layers.size());
    avg.weight /= n;
    avg.bias /= n;
    day_out = avg.forward(stacked);
    fallback = true;
  } else {
    throw std::invalid_argument("unknown session: " + session);
  }
  if (trace != nullptr) {
    trace->session = session;
    trace->used_fallback = fallback;
    trace->stacked = std::move(stacked);
    trace->day_out = day_out;
  }
  return run_gru(std::move(day_out), trace);
}

Matrix FeatureExtractor::forward_without_day_layer(const Matrix& signal) const {
  return run_gru(stack_frames(signal, config.stack_k, config.stack_s), nullptr);
}

void FeatureExtractor::backward(const ExtractorTrace& trace, const Matrix& dz, FeatureExtractor& grads) const {
  const int dirs = config.directions();
  const int H = config.hidden;
  Matrix dout = dz;
  for (int l = config.num_layers - 1; l >= 0; --l) {
    Matrix dx;
    for (int d = 0; d < dirs; ++d) {
      const auto idx = static_cast<std::size_t>(l * dirs + d);
      Matrix part = gru_backward(cells[idx], trace.cells[idx], dout.middleCols(d * H, H), grads.cells[idx]);
      if (d == 0) {
        dx = std::move(part);
      } else {
        dx += part;
      }
    }
    dout = std::move(dx);
  }
  if (!trace.used_fallback) {
    day_layers.at(trace.session).backward(trace.stacked, dout, &grads.day_layers.at(trace.session));
  }
}

FeatureExtractor FeatureExtractor::zeros_like() const {
  FeatureExtractor g;
  g.config = config;
  for (const auto& [s, layer] : day_layers) g.day_layers.emplace(s, layer.zeros_like());
  for (const auto& c : cells) g.cells.push_back(c.zeros_like());
  return g;
}

void FeatureExtractor::named_params(const std::string& prefix, ParamRefs& out) {
  for (auto& [s, layer] : day_layers) layer.named_params(prefix + ".day." + s, out);
  const int dirs = config.directions();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto l = static_cast<int>(i) / dirs;
    const auto d = static_cast<int>(i) % dirs;
    cells[i].named_params(prefix + ".gru." + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd"), out);
  }
}

CtcHead CtcHead::create(int feature_dim, int num_classes, Rng& rng) { return {Linear::create(feature_dim, num_classes, rng)}; }

}  // namespace b2t
