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

#include "zstag/audio.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>

#include <fftw3.h>
#include <nlohmann/json.hpp>

namespace zstag {

using json = nlohmann::json;

namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMelLogStartHz = 1000.0;
constexpr double kMelLogStart = kMelLogStartHz / kMelLinearStep;  // 15
const double kMelLogStep = std::log(6.4) / 27.0;

constexpr std::uint8_t kFeatureVersion = 1;

// Reflect-pads by mirroring around the end samples, repeatedly if needed.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

struct FftwPlan {
  explicit FftwPlan(int n)
      : in(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out(static_cast<fftw_complex*>(
            fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
        plan(fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE)) {}
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;

  double* in;
  fftw_complex* out;
  fftw_plan plan;
};

void check_config(const MelConfig& config) {
  if (config.n_fft <= 0 || config.hop <= 0 || config.n_mels <= 0 ||
      config.sample_rate <= 0 || config.f_max <= config.f_min) {
    throw ConfigError("invalid mel configuration");
  }
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMelLogStartHz) return hz / kMelLinearStep;
  return kMelLogStart + std::log(hz / kMelLogStartHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelLogStart) return mel * kMelLinearStep;
  return kMelLogStartHz * std::exp(kMelLogStep * (mel - kMelLogStart));
}

namespace {

std::vector<double> mel_edges(const MelConfig& config) {
  const double lo = hz_to_mel(config.f_min);
  const double hi = hz_to_mel(config.f_max);
  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (config.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& config) {
  check_config(config);
  const auto edges = mel_edges(config);
  return {edges.begin() + 1, edges.end() - 1};
}

std::vector<double> mel_filterbank(const MelConfig& config) {
  check_config(config);
  const int n_bins = config.n_fft / 2 + 1;
  const auto edges = mel_edges(config);
  std::vector<double> weights(static_cast<std::size_t>(config.n_mels) * n_bins,
                              0.0);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (int k = 0; k < n_bins; ++k) {
      const double f =
          static_cast<double>(k) * config.sample_rate / config.n_fft;
      const double rising = (f - left) / (center - left);
      const double falling = (right - f) / (right - center);
      const double w = std::max(0.0, std::min(rising, falling));
      weights[static_cast<std::size_t>(m) * n_bins + k] = w * norm;
    }
  }
  return weights;
}

FeatureMatrix mel_magnitude(std::span<const float> samples, int sample_rate,
                            const MelConfig& config) {
  check_config(config);
  if (sample_rate != config.sample_rate) {
    throw DataError("expected " + std::to_string(config.sample_rate) +
                    " Hz audio, got " + std::to_string(sample_rate) +
                    " Hz (resampling is not supported)");
  }
  if (samples.empty()) throw DataError("audio is empty");

  const std::size_t n = samples.size();
  const auto n_fft = static_cast<std::size_t>(config.n_fft);
  const auto hop = static_cast<std::size_t>(config.hop);
  const std::size_t n_bins = n_fft / 2 + 1;
  const auto n_mels = static_cast<std::size_t>(config.n_mels);
  const std::size_t frames = 1 + n / hop;
  const auto pad = static_cast<std::ptrdiff_t>(n_fft / 2);

  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                     static_cast<double>(i) /
                                     static_cast<double>(n_fft));
  }
  const auto filters = mel_filterbank(config);

  FftwPlan fft(config.n_fft);
  std::vector<double> magnitude(n_bins);
  FeatureMatrix out(frames, n_mels);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - pad;
    for (std::size_t i = 0; i < n_fft; ++i) {
      const auto src = reflect_index(start + static_cast<std::ptrdiff_t>(i), n);
      fft.in[i] = static_cast<double>(samples[src]) * window[i];
    }
    fftw_execute(fft.plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      magnitude[k] = std::hypot(fft.out[k][0], fft.out[k][1]);
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* w = filters.data() + m * n_bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) acc += w[k] * magnitude[k];
      out.at(t, m) = static_cast<float>(acc);
    }
  }
  return out;
}

FeatureMatrix extract_mel(std::span<const float> samples, int sample_rate,
                          const MelConfig& config) {
  FeatureMatrix mel = mel_magnitude(samples, sample_rate, config);
  for (float& v : mel.data) v = std::log1p(v);
  return mel;
}

namespace {

std::uint16_t read_u16(const std::string& bytes, std::size_t offset) {
  if (offset + 2 > bytes.size()) throw DataError("truncated WAV data");
  return static_cast<std::uint16_t>(
      static_cast<unsigned char>(bytes[offset]) |
      (static_cast<unsigned char>(bytes[offset + 1]) << 8));
}

}  // namespace

WavAudio parse_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  WavAudio audio;
  int format = 0;
  int bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError("truncated WAV chunk " + id);
    if (id == "fmt ") {
      format = read_u16(bytes, body);
      audio.channels = read_u16(bytes, body + 2);
      audio.sample_rate = static_cast<int>(read_u32(bytes, body + 4));
      bits = read_u16(bytes, body + 14);
      if (format == 0xFFFE && size >= 26) format = read_u16(bytes, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("WAV data chunk before fmt chunk");
      if (format == 1 && bits == 16) {
        audio.samples.resize(size / 2);
        for (std::size_t i = 0; i < audio.samples.size(); ++i) {
          const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
          audio.samples[i] = static_cast<float>(raw) / 32768.0f;
        }
      } else if (format == 3 && bits == 32) {
        audio.samples.resize(size / 4);
        for (std::size_t i = 0; i < audio.samples.size(); ++i) {
          audio.samples[i] = read_f32(bytes, body + 4 * i);
        }
      } else {
        throw DataError("unsupported WAV encoding (format " +
                        std::to_string(format) + ", " + std::to_string(bits) +
                        " bits)");
      }
      return audio;
    }
    pos = body + size + (size & 1U);
  }
  throw DataError("WAV file has no data chunk");
}

WavAudio read_wav(const std::string& path) { return parse_wav(read_file(path)); }

std::string encode_wav_float(std::span<const float> samples, int sample_rate) {
  std::string out = "RIFF";
  const auto data_size = static_cast<std::uint32_t>(samples.size() * 4);
  append_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  append_u32(out, 16);
  out.push_back(3);  // IEEE float
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  append_u32(out, static_cast<std::uint32_t>(sample_rate));
  append_u32(out, static_cast<std::uint32_t>(sample_rate) * 4);
  out.push_back(4);  // block align
  out.push_back(0);
  out.push_back(32);
  out.push_back(0);
  out += "data";
  append_u32(out, data_size);
  for (float s : samples) append_f32(out, s);
  return out;
}

FeatureMatrix extract_mel_from_wav(const std::string& path,
                                   const MelConfig& config) {
  const WavAudio audio = read_wav(path);
  if (audio.channels != 1) {
    throw DataError(path + ": expected mono audio, got " +
                    std::to_string(audio.channels) + " channels");
  }
  return extract_mel(audio.samples, audio.sample_rate, config);
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> std,
                           std::size_t fitted_on)
    : mean_(std::move(mean)), std_(std::move(std)), fitted_on_(fitted_on) {
  if (mean_.size() != std_.size()) {
    throw DataError("standardizer mean/std size mismatch");
  }
  for (double& s : std_) s = std::max(s, kStdFloor);
}

void Standardizer::apply(FeatureMatrix& features) const {
  if (features.dims != dims()) {
    throw DataError("standardizer has " + std::to_string(dims()) +
                    " dims, features have " + std::to_string(features.dims));
  }
  for (std::size_t t = 0; t < features.frames; ++t) {
    for (std::size_t d = 0; d < features.dims; ++d) {
      float& v = features.at(t, d);
      v = static_cast<float>((v - mean_[d]) / std_[d]);
    }
  }
}

void Standardizer::invert(FeatureMatrix& features) const {
  if (features.dims != dims()) {
    throw DataError("standardizer dimension mismatch");
  }
  for (std::size_t t = 0; t < features.frames; ++t) {
    for (std::size_t d = 0; d < features.dims; ++d) {
      float& v = features.at(t, d);
      v = static_cast<float>(v * std_[d] + mean_[d]);
    }
  }
}

std::string Standardizer::to_json() const {
  json obj;
  obj["mean"] = mean_;
  obj["std"] = std_;
  obj["fitted_on"] = fitted_on_;
  return obj.dump();
}

Standardizer Standardizer::from_json(const std::string& text) {
  try {
    const json obj = json::parse(text);
    return Standardizer(obj.at("mean").get<std::vector<double>>(),
                        obj.at("std").get<std::vector<double>>(),
                        obj.at("fitted_on").get<std::size_t>());
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid standardizer JSON: ") + e.what());
  }
}

void StandardizerFit::add(const FeatureMatrix& features) {
  if (mean_.empty()) {
    mean_.assign(features.dims, 0.0);
    m2_.assign(features.dims, 0.0);
  } else if (features.dims != mean_.size()) {
    throw DataError("feature dimension mismatch while fitting standardizer");
  }
  for (std::size_t t = 0; t < features.frames; ++t) {
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t d = 0; d < features.dims; ++d) {
      const double x = features.at(t, d);
      const double delta = x - mean_[d];
      mean_[d] += delta / n;
      m2_[d] += delta * (x - mean_[d]);
    }
  }
}

Standardizer StandardizerFit::finish() const {
  if (count_ < 2) {
    throw DataError("standardizer needs at least two frames, got " +
                    std::to_string(count_));
  }
  std::vector<double> std(m2_.size());
  for (std::size_t d = 0; d < m2_.size(); ++d) {
    std[d] = std::sqrt(m2_[d] / static_cast<double>(count_));
  }
  return Standardizer(mean_, std::move(std), count_);
}

Standardizer fit_standardizer(std::span<const FeatureMatrix> features) {
  if (features.empty()) throw DataError("no features to fit a standardizer");
  StandardizerFit fit;
  for (const auto& f : features) fit.add(f);
  return fit.finish();
}

FeatureMatrix tile_frames(const FeatureMatrix& features, std::size_t begin,
                          std::size_t end, std::size_t frames) {
  if (begin >= end || end > features.frames) {
    throw DataError("tile_frames: empty or out-of-range source window");
  }
  FeatureMatrix out(frames, features.dims);
  const std::size_t span = end - begin;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto src = features.frame(begin + t % span);
    std::copy(src.begin(), src.end(), out.data.begin() + t * features.dims);
  }
  return out;
}

FeatureMatrix sample_chunk(const FeatureMatrix& features,
                           std::size_t chunk_frames, Rng& rng) {
  if (chunk_frames == 0) throw ConfigError("chunk length must be positive");
  if (features.frames == 0) throw DataError("feature matrix has no frames");
  if (features.frames < chunk_frames) {
    return tile_frames(features, 0, features.frames, chunk_frames);
  }
  const std::size_t offset =
      rng.uniform_index(features.frames - chunk_frames + 1);
  return tile_frames(features, offset, offset + chunk_frames, chunk_frames);
}

std::vector<FeatureMatrix> chunk_track(const FeatureMatrix& features,
                                       std::size_t chunk_frames) {
  if (chunk_frames == 0) throw ConfigError("chunk length must be positive");
  if (features.frames == 0) throw DataError("feature matrix has no frames");
  std::vector<FeatureMatrix> chunks;
  for (std::size_t begin = 0; begin < features.frames; begin += chunk_frames) {
    const std::size_t end = std::min(begin + chunk_frames, features.frames);
    chunks.push_back(tile_frames(features, begin, end, chunk_frames));
  }
  return chunks;
}

std::string encode_features(const FeatureMatrix& features,
                            const std::string& trailer_json) {
  std::string out = "ZSTF";
  out.push_back(static_cast<char>(kFeatureVersion));
  append_u32(out, static_cast<std::uint32_t>(features.frames));
  append_u32(out, static_cast<std::uint32_t>(features.dims));
  out.reserve(out.size() + features.data.size() * 4 + trailer_json.size());
  for (float v : features.data) append_f32(out, v);
  out += trailer_json;
  return out;
}

FeatureMatrix decode_features(const std::string& bytes,
                              std::string* trailer_json) {
  if (bytes.size() < 13 || bytes.compare(0, 4, "ZSTF") != 0) {
    throw DataError("not a ZSTF feature file");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kFeatureVersion) {
    throw DataError("unsupported ZSTF version " +
                    std::to_string(static_cast<int>(bytes[4])));
  }
  FeatureMatrix features(read_u32(bytes, 5), read_u32(bytes, 9));
  const std::size_t payload = 13 + features.data.size() * 4;
  if (bytes.size() < payload) throw DataError("truncated ZSTF feature file");
  for (std::size_t i = 0; i < features.data.size(); ++i) {
    features.data[i] = read_f32(bytes, 13 + 4 * i);
  }
  if (trailer_json != nullptr) *trailer_json = bytes.substr(payload);
  return features;
}

void save_features(const std::string& path, const FeatureMatrix& features,
                   const std::string& trailer_json) {
  write_file(path, encode_features(features, trailer_json));
}

FeatureMatrix load_features(const std::string& path, std::string* trailer_json) {
  try {
    return decode_features(read_file(path), trailer_json);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string mel_trailer_json(const MelConfig& config) {
  json obj;
  obj["sample_rate"] = config.sample_rate;
  obj["n_fft"] = config.n_fft;
  obj["hop"] = config.hop;
  obj["n_mels"] = config.n_mels;
  obj["f_min"] = config.f_min;
  obj["f_max"] = config.f_max;
  obj["window"] = "hann";
  obj["mel_scale"] = "slaney";
  obj["filter_norm"] = "area";
  obj["compression"] = "log1p";
  obj["framing"] = "center-reflect";
  return obj.dump();
}

std::string feature_file_name(const std::string& instance_id) {
  std::string name;
  for (char c : instance_id) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    name.push_back(safe ? c : '_');
  }
  return name + ".zstf";
}

FeatureStore load_feature_dir(const std::string& dir,
                              const std::vector<std::string>& ids) {
  FeatureStore store;
  for (const auto& id : ids) {
    const auto path = std::filesystem::path(dir) / feature_file_name(id);
    store.emplace(id, load_features(path.string()));
  }
  return store;
}

}  // namespace zstag
