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

// Mel-spectrogram extraction, per-bin standardization, chunking and the
// ZSTF feature file format.

#ifndef ZSTAG_AUDIO_H_
#define ZSTAG_AUDIO_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zstag/common.h"

namespace zstag {

// Time-major T x D matrix of 32-bit features.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t t, std::size_t d)
      : frames(t), dims(d), data(t * d, 0.0f) {}

  float& at(std::size_t t, std::size_t d) { return data[t * dims + d]; }
  float at(std::size_t t, std::size_t d) const { return data[t * dims + d]; }
  std::span<const float> frame(std::size_t t) const {
    return {data.data() + t * dims, dims};
  }
};

// Extraction profile. Slaney mel scale with area-normalized triangular
// filters, periodic Hann window, centered reflect-padded frames and
// log(1 + S) compression of the mel magnitude.
struct MelConfig {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop = 512;
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 11025.0;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (n_fft / 2 + 1), row-major.
std::vector<double> mel_filterbank(const MelConfig& config);

// Peak frequency of each mel filter.
std::vector<double> mel_center_frequencies(const MelConfig& config);

// Mel magnitudes before compression. T = 1 + n_samples / hop.
FeatureMatrix mel_magnitude(std::span<const float> samples, int sample_rate,
                            const MelConfig& config = {});

// log(1 + mel_magnitude).
FeatureMatrix extract_mel(std::span<const float> samples, int sample_rate,
                          const MelConfig& config = {});

struct WavAudio {
  int sample_rate = 0;
  int channels = 0;
  std::vector<float> samples;  // interleaved, in [-1, 1] for PCM
};

// PCM 16-bit or IEEE float 32-bit WAV.
WavAudio parse_wav(const std::string& bytes);
WavAudio read_wav(const std::string& path);
std::string encode_wav_float(std::span<const float> samples, int sample_rate);

// Reads a mono WAV at the configured rate and extracts its mel-spectrogram.
FeatureMatrix extract_mel_from_wav(const std::string& path,
                                   const MelConfig& config = {});

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> std,
               std::size_t fitted_on);

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& std() const { return std_; }
  std::size_t fitted_on() const { return fitted_on_; }
  std::size_t dims() const { return mean_.size(); }

  void apply(FeatureMatrix& features) const;
  void invert(FeatureMatrix& features) const;

  std::string to_json() const;
  static Standardizer from_json(const std::string& text);

  static constexpr double kStdFloor = 1e-8;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
  std::size_t fitted_on_ = 0;
};

// Streaming per-bin mean / population variance over frames.
class StandardizerFit {
 public:
  void add(const FeatureMatrix& features);
  std::size_t frames() const { return count_; }
  Standardizer finish() const;

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

Standardizer fit_standardizer(std::span<const FeatureMatrix> features);

// Repeats the frames along time until `frames` rows are filled.
FeatureMatrix tile_frames(const FeatureMatrix& features, std::size_t begin,
                          std::size_t end, std::size_t frames);

// Random contiguous window; tracks shorter than the window are tiled.
FeatureMatrix sample_chunk(const FeatureMatrix& features,
                           std::size_t chunk_frames, Rng& rng);

// Non-overlapping windows covering the track; the last partial window is
// tiled. Always returns at least one chunk.
std::vector<FeatureMatrix> chunk_track(const FeatureMatrix& features,
                                       std::size_t chunk_frames);

// ZSTF: "ZSTF", u8 version, u32 T, u32 D, T*D little-endian f32, JSON trailer.
std::string encode_features(const FeatureMatrix& features,
                            const std::string& trailer_json);
FeatureMatrix decode_features(const std::string& bytes,
                              std::string* trailer_json = nullptr);
void save_features(const std::string& path, const FeatureMatrix& features,
                   const std::string& trailer_json = "{}");
FeatureMatrix load_features(const std::string& path,
                            std::string* trailer_json = nullptr);

std::string mel_trailer_json(const MelConfig& config);

// File name used for an instance inside a feature directory.
std::string feature_file_name(const std::string& instance_id);

using FeatureStore = std::map<std::string, FeatureMatrix>;

// Loads <dir>/<feature_file_name(id)> for each id.
FeatureStore load_feature_dir(const std::string& dir,
                              const std::vector<std::string>& ids);

}  // namespace zstag

#endif  // ZSTAG_AUDIO_H_
