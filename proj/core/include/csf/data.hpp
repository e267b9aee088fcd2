#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/tensor.hpp"

namespace csf {

// One fixed-length multi-channel EEG window. Sample payloads are stored as
// 32-bit floats (microvolts) so file round trips are bitwise; training
// widens to 64-bit tensors on the fly.
struct EEGSegment {
  std::vector<float> data;  // row-major [C,L]
  Index label = 0;          // 0..K-1
  Index subject_id = 0;
  Index segment_index = 0;  // position within the subject's recording

  Tensor to_tensor(Index channels, Index length) const;
};

struct EEGDataset {
  Index channels = 0;
  Index length = 0;
  Index classes = 0;
  double sampling_rate = 0.0;
  bool bandpass_filtered = false;  // set by external producers, never by the generator
  std::vector<EEGSegment> segments;

  std::vector<Index> subject_ids() const;               // sorted, unique
  std::vector<Index> labels_by_subject() const;         // label of subject_ids()[i]
  Tensor batch_tensor(const std::vector<Index>& segment_indices) const;  // [B,C,L]
};

// One spectral band of a class signature.
struct BandSpec {
  double center_hz = 10.0;
  double bandwidth_hz = 1.0;
  double amplitude_uv = 50.0;
};

// Built-in class signatures; see SyntheticSpec::defaults.
std::vector<std::vector<BandSpec>> default_bands(Index classes);

struct SyntheticSpec {
  Index channels = 6;        // C
  Index length = 512;        // L
  double sampling_rate = 256.0;
  Index classes = 3;         // K
  std::vector<std::vector<BandSpec>> class_bands;  // per class, >= 1 band each
  double amplitude_jitter = 0.2;   // per-subject fractional amplitude variation
  bool randomize_phase = true;     // per-segment, per-channel phases
  double background_std = 5.0;     // white-noise floor, microvolts
  Index subjects_per_class = 12;
  Index segments_per_subject = 40;

  // K=3 signature set: 2 Hz, 40 Hz, and 10 Hz dominant bands (amp 50 uV,
  // width 1 Hz); other K get centers evenly spaced over 2..40 Hz.
  static SyntheticSpec defaults();

  void validate() const;  // Nyquist and positivity checks
};

// Deterministic per (spec, seed): every segment draws from a private stream
// derived from (seed, subject, segment), so generation order is irrelevant.
// Subject s of class k gets id k*subjects_per_class + s.
EEGDataset generate(const SyntheticSpec& spec, std::uint64_t seed);

struct NoiseInjectionSpec {
  Index corrupted_channel_count = 2;  // applied to the LAST channels
  double noise_std = 1000.0;          // microvolts
  double noise_mean = 0.0;
  std::uint64_t seed = 0;
};

// Additive Gaussian noise on the last `corrupted_channel_count` channels;
// clean channels are copied bit-for-bit.
EEGDataset inject_noise(const EEGDataset& dataset, const NoiseInjectionSpec& spec);

// Chops [C,T] into floor(T/window_len) non-overlapping windows; the tail
// remainder is discarded. T < window_len yields an empty list with a
// warning. Only overlap == 0 is supported.
std::vector<EEGSegment> segment(const Tensor& recording, Index window_len, Index overlap,
                                Index subject_id, Index label);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct DatasetSplits {
  EEGDataset train;
  EEGDataset val;
  EEGDataset test;
};

// Subject-independent stratified split: subjects (not segments) are divided
// per class by largest-remainder apportionment with at least one subject per
// split per class; all of a subject's segments land in one split.
DatasetSplits split_by_subject(const EEGDataset& dataset, const SplitFractions& fractions,
                               std::uint64_t seed);

// Binary container: magic "EEGD", version, flags, header (C, L, K, count,
// sampling rate), then per-segment records (subject u32, label u16, f32
// little-endian payload, CRC32 of the record). Lossless for f32 payloads.
void write_dataset(const EEGDataset& dataset, const std::string& path);
EEGDataset read_dataset(const std::string& path);

}  // namespace csf
