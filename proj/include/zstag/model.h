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

// Joint audio/semantic embedding network.
//
// Audio branch: a stack of time convolutions over a (frames x bins) chunk.
// The first layer treats every bin as an input channel, so its filters span
// the whole frequency axis; later layers convolve the channel maps over time.
// Each stack layer is conv -> ReLU -> max-pool. A linear head convolution and
// a global average over time produce the audio embedding y_A.
//
// Semantic branch: y_W = ReLU(W w + b) over a label's side-information
// vector. Relevance is cos(y_A, y_W); training minimizes the ranking hinge
// max(0, margin - cos(y_A, y_W+) + cos(y_A, y_W-)).
//
// The optional classifier head maps y_A to per-label logits for the
// sigmoid / binary cross-entropy baseline.
//
// Gradients are exact and accumulated into a flat buffer laid out like
// ModelParams::values.

#ifndef ZSTAG_MODEL_H_
#define ZSTAG_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "zstag/audio.h"
#include "zstag/dataset.h"

namespace zstag {

struct ConvLayerSpec {
  std::size_t channels;
  std::size_t width;  // kernel length in frames
  std::size_t pool;   // max-pool width
};

struct EncoderConfig {
  std::size_t input_frames = 130;
  std::size_t input_bins = 128;
  std::vector<ConvLayerSpec> conv_stack;
  std::size_t head_channels = 256;
  std::size_t head_width = 1;
  std::size_t embedding_dim = 256;
  std::size_t semantic_input_dim = 0;  // 0: no semantic branch
  std::size_t n_classes = 0;           // 0: no classifier head
  bool semantic_relu = true;

  // 64-channel 4-layer stack, pools 4,2,2,2, E = 256.
  static EncoderConfig paper(std::size_t input_bins,
                             std::size_t semantic_input_dim);
  // 2 layers of 8 channels, E = 16, 32-frame chunks.
  static EncoderConfig tiny(std::size_t input_bins,
                            std::size_t semantic_input_dim);
  static EncoderConfig profile(const std::string& name, std::size_t input_bins,
                               std::size_t semantic_input_dim);

  // Frames left after the pooling stack.
  std::size_t pooled_frames() const;
  // Throws ConfigError on inconsistent shapes.
  void validate() const;
};

struct TensorSlot {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset;
  std::size_t size;
  std::size_t fan_in;
  bool is_bias;
};

class ParamLayout {
 public:
  explicit ParamLayout(const EncoderConfig& config);

  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::size_t total() const { return total_; }
  const TensorSlot& slot(const std::string& name) const;

 private:
  void add(std::string name, std::vector<std::size_t> shape, std::size_t fan_in,
           bool is_bias);

  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

struct ModelParams {
  ModelParams() = default;
  // Zero-valued parameters shaped for `config` (validated).
  explicit ModelParams(const EncoderConfig& config);

  // Fixed at construction; the layout is derived from it.
  EncoderConfig config;
  std::uint64_t seed = 0;
  // Label id of each classifier output, when the head exists.
  std::vector<LabelId> class_labels;
  std::vector<double> values;

  const ParamLayout& layout() const { return *layout_; }
  std::size_t count() const { return values.size(); }
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;

  // Rounds every value to the nearest float, the checkpoint precision.
  void round_to_float();

 private:
  std::shared_ptr<const ParamLayout> layout_;
};

// Fan-in scaled uniform weights U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)),
// zero biases.
ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);

using Gradients = std::vector<double>;

struct ConvCache {
  std::size_t in_frames = 0;
  std::size_t in_channels = 0;
  std::vector<double> input;       // in_frames x in_channels
  std::vector<double> pre;         // in_frames x channels, before ReLU
  std::vector<std::size_t> argmax; // pooled_frames x channels, frame index
};

struct AudioCache {
  std::vector<ConvCache> layers;
  std::size_t head_frames = 0;
  std::vector<double> head_input;  // head_frames x last channels
};

struct AudioForward {
  std::vector<double> embedding;  // y_A
  AudioCache cache;
};

AudioForward audio_forward(const ModelParams& params,
                           const FeatureMatrix& chunk);

// Adds d(loss)/d(params) given d(loss)/d(y_A).
void audio_backward(const ModelParams& params, const AudioCache& cache,
                    std::span<const double> d_embedding, Gradients& grads);

struct SemanticForward {
  std::vector<double> input;   // w
  std::vector<double> pre;     // W w + b
  std::vector<double> output;  // y_W
};

SemanticForward semantic_forward(const ModelParams& params,
                                 std::span<const double> w);

void semantic_backward(const ModelParams& params, const SemanticForward& fwd,
                       std::span<const double> d_output, Gradients& grads);

// Cosine similarity; 0 when either vector is zero.
double relevance(std::span<const double> a, std::span<const double> b);

struct RelevanceGrad {
  double value = 0.0;
  std::vector<double> d_a;
  std::vector<double> d_b;
};

RelevanceGrad relevance_with_grad(std::span<const double> a,
                                  std::span<const double> b);

double hinge_loss(double rel_pos, double rel_neg, double margin);

struct LabelPair {
  LabelId positive;
  LabelId negative;
};

// Uniform positive from positives ∩ X and uniform negative from X minus the
// positives. nullopt when either side is empty.
std::optional<LabelPair> sample_pair(std::span<const LabelId> positives,
                                     const std::set<LabelId>& seen, Rng& rng);

// Hinge loss of one (chunk, w+, w-) triple. When `grads` is non-null, adds
// scale * d(loss)/d(params) into it.
double embedding_loss(const ModelParams& params, const FeatureMatrix& chunk,
                      std::span<const double> w_pos,
                      std::span<const double> w_neg, double margin,
                      Gradients* grads, double scale = 1.0);

// Mean binary cross-entropy over the classifier outputs for one chunk.
double classifier_loss(const ModelParams& params, const FeatureMatrix& chunk,
                       std::span<const double> targets, Gradients* grads,
                       double scale = 1.0);

std::vector<double> classifier_logits(const ModelParams& params,
                                      std::span<const double> embedding);

}  // namespace zstag

#endif  // ZSTAG_MODEL_H_
