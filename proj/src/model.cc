// Copyright 2026 The zstag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "zstag/model.h"

#include <algorithm>
#include <cmath>

#include "zstag/common.h"

namespace zstag {

EncoderConfig EncoderConfig::paper(std::size_t input_bins,
                                   std::size_t semantic_input_dim) {
  EncoderConfig config;
  config.input_frames = 130;
  config.input_bins = input_bins;
  config.conv_stack = {{64, 4, 4}, {64, 4, 2}, {64, 4, 2}, {64, 4, 2}};
  config.head_channels = 256;
  config.head_width = 1;
  config.embedding_dim = 256;
  config.semantic_input_dim = semantic_input_dim;
  return config;
}

EncoderConfig EncoderConfig::tiny(std::size_t input_bins,
                                  std::size_t semantic_input_dim) {
  EncoderConfig config;
  config.input_frames = 32;
  config.input_bins = input_bins;
  config.conv_stack = {{8, 4, 2}, {8, 4, 2}};
  config.head_channels = 16;
  config.head_width = 1;
  config.embedding_dim = 16;
  config.semantic_input_dim = semantic_input_dim;
  return config;
}

EncoderConfig EncoderConfig::profile(const std::string& name,
                                     std::size_t input_bins,
                                     std::size_t semantic_input_dim) {
  if (name == "paper") return paper(input_bins, semantic_input_dim);
  if (name == "tiny") return tiny(input_bins, semantic_input_dim);
  throw ConfigError("unknown model profile: " + name +
                    " (expected paper or tiny)");
}

std::size_t EncoderConfig::pooled_frames() const {
  std::size_t frames = input_frames;
  for (const auto& layer : conv_stack) {
    frames = layer.pool == 0 ? 0 : frames / layer.pool;
  }
  return frames;
}

void EncoderConfig::validate() const {
  if (input_frames == 0 || input_bins == 0) {
    throw ConfigError("encoder input shape must be positive");
  }
  if (conv_stack.empty()) throw ConfigError("encoder needs a conv layer");
  for (const auto& layer : conv_stack) {
    if (layer.channels == 0 || layer.width == 0 || layer.pool == 0) {
      throw ConfigError("conv layer channels, width and pool must be positive");
    }
  }
  if (pooled_frames() == 0) {
    throw ConfigError("pooling reduces " + std::to_string(input_frames) +
                      " input frames to zero");
  }
  if (head_width == 0 || head_channels == 0) {
    throw ConfigError("head conv shape must be positive");
  }
  if (embedding_dim != head_channels) {
    throw ConfigError("embedding_dim " + std::to_string(embedding_dim) +
                      " must equal the head conv channels " +
                      std::to_string(head_channels));
  }
}

ParamLayout::ParamLayout(const EncoderConfig& config) {
  config.validate();
  std::size_t in_channels = config.input_bins;
  for (std::size_t l = 0; l < config.conv_stack.size(); ++l) {
    const auto& layer = config.conv_stack[l];
    const std::string prefix = "conv" + std::to_string(l);
    add(prefix + ".weight", {layer.channels, layer.width, in_channels},
        layer.width * in_channels, false);
    add(prefix + ".bias", {layer.channels}, 0, true);
    in_channels = layer.channels;
  }
  add("head.weight", {config.head_channels, config.head_width, in_channels},
      config.head_width * in_channels, false);
  add("head.bias", {config.head_channels}, 0, true);
  if (config.semantic_input_dim > 0) {
    add("semantic.weight", {config.embedding_dim, config.semantic_input_dim},
        config.semantic_input_dim, false);
    add("semantic.bias", {config.embedding_dim}, 0, true);
  }
  if (config.n_classes > 0) {
    add("classifier.weight", {config.n_classes, config.embedding_dim},
        config.embedding_dim, false);
    add("classifier.bias", {config.n_classes}, 0, true);
  }
}

void ParamLayout::add(std::string name, std::vector<std::size_t> shape,
                      std::size_t fan_in, bool is_bias) {
  std::size_t size = 1;
  for (std::size_t s : shape) size *= s;
  slots_.push_back({std::move(name), std::move(shape), total_, size, fan_in,
                    is_bias});
  total_ += size;
}

const TensorSlot& ParamLayout::slot(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw ConfigError("model has no tensor " + name);
}

ModelParams::ModelParams(const EncoderConfig& cfg)
    : config(cfg), layout_(std::make_shared<const ParamLayout>(cfg)) {
  values.assign(layout_->total(), 0.0);
}

std::span<double> ModelParams::tensor(const std::string& name) {
  const auto& s = layout_->slot(name);
  return {values.data() + s.offset, s.size};
}

std::span<const double> ModelParams::tensor(const std::string& name) const {
  const auto& s = layout_->slot(name);
  return {values.data() + s.offset, s.size};
}

void ModelParams::round_to_float() {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  params.seed = seed;
  Rng rng(derive_seed(seed, 11));
  for (const auto& slot : params.layout().slots()) {
    if (slot.is_bias) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(slot.fan_in));
    for (std::size_t i = 0; i < slot.size; ++i) {
      // Float-representable, so a checkpoint round trip is exact.
      params.values[slot.offset + i] =
          static_cast<float>(rng.uniform(-limit, limit));
    }
  }
  return params;
}

namespace {

// "Same"-padded time convolution. in: frames x in_ch, weight: out_ch x width
// x in_ch, out: frames x out_ch.
void conv_forward(const double* in, std::size_t frames, std::size_t in_ch,
                  const double* weight, const double* bias, std::size_t out_ch,
                  std::size_t width, double* out) {
  const auto pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const auto n = static_cast<std::ptrdiff_t>(frames);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    double* o_row = out + t * static_cast<std::ptrdiff_t>(out_ch);
    for (std::size_t o = 0; o < out_ch; ++o) o_row[o] = bias[o];
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
      if (src < 0 || src >= n) continue;
      const double* x = in + src * static_cast<std::ptrdiff_t>(in_ch);
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double* w = weight + (o * width + k) * in_ch;
        double acc = 0.0;
        for (std::size_t c = 0; c < in_ch; ++c) acc += w[c] * x[c];
        o_row[o] += acc;
      }
    }
  }
}

void conv_backward(const double* in, std::size_t frames, std::size_t in_ch,
                   const double* weight, std::size_t out_ch, std::size_t width,
                   const double* d_out, double* d_weight, double* d_bias,
                   double* d_in) {
  const auto pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const auto n = static_cast<std::ptrdiff_t>(frames);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const double* g_row = d_out + t * static_cast<std::ptrdiff_t>(out_ch);
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double g = g_row[o];
      if (g == 0.0) continue;
      d_bias[o] += g;
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
        if (src < 0 || src >= n) continue;
        const std::size_t w_off = (o * width + k) * in_ch;
        const double* x = in + src * static_cast<std::ptrdiff_t>(in_ch);
        double* dw = d_weight + w_off;
        for (std::size_t c = 0; c < in_ch; ++c) dw[c] += g * x[c];
        if (d_in != nullptr) {
          const double* w = weight + w_off;
          double* dx = d_in + src * static_cast<std::ptrdiff_t>(in_ch);
          for (std::size_t c = 0; c < in_ch; ++c) dx[c] += g * w[c];
        }
      }
    }
  }
}

}  // namespace

AudioForward audio_forward(const ModelParams& params,
                           const FeatureMatrix& chunk) {
  const auto& config = params.config;
  if (chunk.frames != config.input_frames || chunk.dims != config.input_bins) {
    throw DataError("chunk shape " + std::to_string(chunk.frames) + "x" +
                    std::to_string(chunk.dims) + " does not match encoder " +
                    std::to_string(config.input_frames) + "x" +
                    std::to_string(config.input_bins));
  }
  const auto& layout = params.layout();
  AudioForward result;
  auto& cache = result.cache;
  cache.layers.resize(config.conv_stack.size());

  std::vector<double> current(chunk.data.begin(), chunk.data.end());
  std::size_t frames = chunk.frames;
  std::size_t channels = chunk.dims;
  for (std::size_t l = 0; l < config.conv_stack.size(); ++l) {
    const auto& spec = config.conv_stack[l];
    const std::string prefix = "conv" + std::to_string(l);
    const auto& w_slot = layout.slot(prefix + ".weight");
    const auto& b_slot = layout.slot(prefix + ".bias");
    ConvCache& layer = cache.layers[l];
    layer.in_frames = frames;
    layer.in_channels = channels;
    layer.pre.assign(frames * spec.channels, 0.0);
    conv_forward(current.data(), frames, channels,
                 params.values.data() + w_slot.offset,
                 params.values.data() + b_slot.offset, spec.channels,
                 spec.width, layer.pre.data());
    layer.input = std::move(current);

    const std::size_t pooled = frames / spec.pool;
    current.assign(pooled * spec.channels, 0.0);
    layer.argmax.assign(pooled * spec.channels, 0);
    for (std::size_t tp = 0; tp < pooled; ++tp) {
      for (std::size_t c = 0; c < spec.channels; ++c) {
        std::size_t best_t = tp * spec.pool;
        double best = std::max(0.0, layer.pre[best_t * spec.channels + c]);
        for (std::size_t t = best_t + 1; t < (tp + 1) * spec.pool; ++t) {
          const double v = std::max(0.0, layer.pre[t * spec.channels + c]);
          if (v > best) {
            best = v;
            best_t = t;
          }
        }
        current[tp * spec.channels + c] = best;
        layer.argmax[tp * spec.channels + c] = best_t;
      }
    }
    frames = pooled;
    channels = spec.channels;
  }

  const auto& hw = layout.slot("head.weight");
  const auto& hb = layout.slot("head.bias");
  std::vector<double> head_out(frames * config.head_channels);
  conv_forward(current.data(), frames, channels,
               params.values.data() + hw.offset,
               params.values.data() + hb.offset, config.head_channels,
               config.head_width, head_out.data());
  cache.head_frames = frames;
  cache.head_input = std::move(current);

  result.embedding.assign(config.head_channels, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t e = 0; e < config.head_channels; ++e) {
      result.embedding[e] += head_out[t * config.head_channels + e];
    }
  }
  for (double& v : result.embedding) v /= static_cast<double>(frames);
  return result;
}

void audio_backward(const ModelParams& params, const AudioCache& cache,
                    std::span<const double> d_embedding, Gradients& grads) {
  const auto& config = params.config;
  const auto& layout = params.layout();
  if (d_embedding.size() != config.head_channels ||
      grads.size() != params.count()) {
    throw DataError("audio_backward: shape mismatch");
  }
  const std::size_t frames = cache.head_frames;
  const std::size_t last_channels =
      config.conv_stack.back().channels;

  std::vector<double> d_head(frames * config.head_channels);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t e = 0; e < config.head_channels; ++e) {
      d_head[t * config.head_channels + e] =
          d_embedding[e] / static_cast<double>(frames);
    }
  }
  const auto& hw = layout.slot("head.weight");
  const auto& hb = layout.slot("head.bias");
  std::vector<double> d_current(frames * last_channels, 0.0);
  conv_backward(cache.head_input.data(), frames, last_channels,
                params.values.data() + hw.offset, config.head_channels,
                config.head_width, d_head.data(), grads.data() + hw.offset,
                grads.data() + hb.offset, d_current.data());

  for (std::size_t l = config.conv_stack.size(); l-- > 0;) {
    const auto& spec = config.conv_stack[l];
    const ConvCache& layer = cache.layers[l];
    const std::size_t pooled = layer.in_frames / spec.pool;
    std::vector<double> d_pre(layer.in_frames * spec.channels, 0.0);
    for (std::size_t tp = 0; tp < pooled; ++tp) {
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const std::size_t t = layer.argmax[tp * spec.channels + c];
        if (layer.pre[t * spec.channels + c] > 0.0) {
          d_pre[t * spec.channels + c] += d_current[tp * spec.channels + c];
        }
      }
    }
    const std::string prefix = "conv" + std::to_string(l);
    const auto& w_slot = layout.slot(prefix + ".weight");
    const auto& b_slot = layout.slot(prefix + ".bias");
    std::vector<double> d_in;
    if (l > 0) d_in.assign(layer.in_frames * layer.in_channels, 0.0);
    conv_backward(layer.input.data(), layer.in_frames, layer.in_channels,
                  params.values.data() + w_slot.offset, spec.channels,
                  spec.width, d_pre.data(), grads.data() + w_slot.offset,
                  grads.data() + b_slot.offset,
                  l > 0 ? d_in.data() : nullptr);
    d_current = std::move(d_in);
  }
}

SemanticForward semantic_forward(const ModelParams& params,
                                 std::span<const double> w) {
  const auto& config = params.config;
  if (config.semantic_input_dim == 0) {
    throw ConfigError("model has no semantic branch");
  }
  if (w.size() != config.semantic_input_dim) {
    throw DataError("semantic vector has dimension " + std::to_string(w.size()) +
                    ", model expects " +
                    std::to_string(config.semantic_input_dim));
  }
  const auto weight = params.tensor("semantic.weight");
  const auto bias = params.tensor("semantic.bias");
  SemanticForward fwd;
  fwd.input.assign(w.begin(), w.end());
  fwd.pre.assign(config.embedding_dim, 0.0);
  for (std::size_t e = 0; e < config.embedding_dim; ++e) {
    double acc = bias[e];
    const double* row = weight.data() + e * w.size();
    for (std::size_t j = 0; j < w.size(); ++j) acc += row[j] * w[j];
    fwd.pre[e] = acc;
  }
  fwd.output = fwd.pre;
  if (config.semantic_relu) {
    for (double& v : fwd.output) v = std::max(0.0, v);
  }
  return fwd;
}

void semantic_backward(const ModelParams& params, const SemanticForward& fwd,
                       std::span<const double> d_output, Gradients& grads) {
  const auto& config = params.config;
  const auto& w_slot = params.layout().slot("semantic.weight");
  const auto& b_slot = params.layout().slot("semantic.bias");
  const std::size_t d = config.semantic_input_dim;
  for (std::size_t e = 0; e < config.embedding_dim; ++e) {
    double g = d_output[e];
    if (config.semantic_relu && fwd.pre[e] <= 0.0) g = 0.0;
    if (g == 0.0) continue;
    grads[b_slot.offset + e] += g;
    double* dw = grads.data() + w_slot.offset + e * d;
    for (std::size_t j = 0; j < d; ++j) dw[j] += g * fwd.input[j];
  }
}

double relevance(std::span<const double> a, std::span<const double> b) {
  return relevance_with_grad(a, b).value;
}

RelevanceGrad relevance_with_grad(std::span<const double> a,
                                  std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("relevance: dimension mismatch");
  RelevanceGrad out;
  out.d_a.assign(a.size(), 0.0);
  out.d_b.assign(b.size(), 0.0);
  double dot = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return out;
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  out.value = std::clamp(dot / (na * nb), -1.0, 1.0);
  const double inv = 1.0 / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.d_a[i] = b[i] * inv - out.value * a[i] / aa;
    out.d_b[i] = a[i] * inv - out.value * b[i] / bb;
  }
  return out;
}

double hinge_loss(double rel_pos, double rel_neg, double margin) {
  return std::max(0.0, margin - rel_pos + rel_neg);
}

std::optional<LabelPair> sample_pair(std::span<const LabelId> positives,
                                     const std::set<LabelId>& seen, Rng& rng) {
  std::vector<LabelId> pos;
  for (LabelId id : positives) {
    if (seen.count(id) != 0) pos.push_back(id);
  }
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  if (pos.empty() || pos.size() == seen.size()) return std::nullopt;
  std::vector<LabelId> neg;
  neg.reserve(seen.size() - pos.size());
  for (LabelId id : seen) {
    if (!std::binary_search(pos.begin(), pos.end(), id)) neg.push_back(id);
  }
  const LabelId p = pos[rng.uniform_index(pos.size())];
  const LabelId n = neg[rng.uniform_index(neg.size())];
  return LabelPair{p, n};
}

double embedding_loss(const ModelParams& params, const FeatureMatrix& chunk,
                      std::span<const double> w_pos,
                      std::span<const double> w_neg, double margin,
                      Gradients* grads, double scale) {
  const AudioForward audio = audio_forward(params, chunk);
  const SemanticForward pos = semantic_forward(params, w_pos);
  const SemanticForward neg = semantic_forward(params, w_neg);
  const RelevanceGrad rp = relevance_with_grad(audio.embedding, pos.output);
  const RelevanceGrad rn = relevance_with_grad(audio.embedding, neg.output);
  const double loss = hinge_loss(rp.value, rn.value, margin);
  if (grads == nullptr || loss <= 0.0) return loss;

  const std::size_t e = audio.embedding.size();
  std::vector<double> d_audio(e);
  std::vector<double> d_pos(e);
  std::vector<double> d_neg(e);
  for (std::size_t i = 0; i < e; ++i) {
    d_audio[i] = scale * (rn.d_a[i] - rp.d_a[i]);
    d_pos[i] = -scale * rp.d_b[i];
    d_neg[i] = scale * rn.d_b[i];
  }
  audio_backward(params, audio.cache, d_audio, *grads);
  semantic_backward(params, pos, d_pos, *grads);
  semantic_backward(params, neg, d_neg, *grads);
  return loss;
}

std::vector<double> classifier_logits(const ModelParams& params,
                                      std::span<const double> embedding) {
  const auto& config = params.config;
  if (config.n_classes == 0) throw ConfigError("model has no classifier head");
  const auto weight = params.tensor("classifier.weight");
  const auto bias = params.tensor("classifier.bias");
  std::vector<double> logits(config.n_classes);
  for (std::size_t j = 0; j < config.n_classes; ++j) {
    double acc = bias[j];
    const double* row = weight.data() + j * config.embedding_dim;
    for (std::size_t e = 0; e < config.embedding_dim; ++e) {
      acc += row[e] * embedding[e];
    }
    logits[j] = acc;
  }
  return logits;
}

double classifier_loss(const ModelParams& params, const FeatureMatrix& chunk,
                       std::span<const double> targets, Gradients* grads,
                       double scale) {
  const auto& config = params.config;
  if (targets.size() != config.n_classes) {
    throw DataError("classifier target size mismatch");
  }
  const AudioForward audio = audio_forward(params, chunk);
  const auto logits = classifier_logits(params, audio.embedding);
  const double n = static_cast<double>(config.n_classes);
  double loss = 0.0;
  std::vector<double> d_logits(config.n_classes);
  for (std::size_t j = 0; j < config.n_classes; ++j) {
    const double z = logits[j];
    const double y = targets[j];
    // log(1 + exp(z)) - y z, evaluated without overflow.
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double sigmoid = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                    : std::exp(z) / (1.0 + std::exp(z));
    d_logits[j] = scale * (sigmoid - y) / n;
  }
  loss /= n;
  if (grads == nullptr) return loss;

  const auto& w_slot = params.layout().slot("classifier.weight");
  const auto& b_slot = params.layout().slot("classifier.bias");
  const auto weight = params.tensor("classifier.weight");
  std::vector<double> d_embedding(config.embedding_dim, 0.0);
  for (std::size_t j = 0; j < config.n_classes; ++j) {
    const double g = d_logits[j];
    (*grads)[b_slot.offset + j] += g;
    double* dw = grads->data() + w_slot.offset + j * config.embedding_dim;
    const double* w = weight.data() + j * config.embedding_dim;
    for (std::size_t e = 0; e < config.embedding_dim; ++e) {
      dw[e] += g * audio.embedding[e];
      d_embedding[e] += g * w[e];
    }
  }
  audio_backward(params, audio.cache, d_embedding, *grads);
  return loss;
}

}  // namespace zstag
