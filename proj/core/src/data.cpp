#include "csf/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "csf/rng.hpp"
#include "serialize.hpp"

namespace csf {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
constexpr char kMagic[4] = {'E', 'E', 'G', 'D'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kFlagBandpassFiltered = 1;

std::uint32_t crc_of(const std::string& buf) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}
}  // namespace

Tensor EEGSegment::to_tensor(Index channels, Index length) const {
  if (static_cast<Index>(data.size()) != channels * length) {
    throw std::invalid_argument("segment: payload holds " + std::to_string(data.size()) +
                                " samples, expected " + std::to_string(channels * length));
  }
  std::vector<double> values(data.begin(), data.end());
  return Tensor::from({channels, length}, std::move(values));
}

std::vector<Index> EEGDataset::subject_ids() const {
  std::vector<Index> ids;
  for (const EEGSegment& s : segments) ids.push_back(s.subject_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Index> EEGDataset::labels_by_subject() const {
  std::map<Index, Index> label_of;
  for (const EEGSegment& s : segments) {
    auto [it, inserted] = label_of.emplace(s.subject_id, s.label);
    if (!inserted && it->second != s.label) {
      throw std::runtime_error("dataset: subject " + std::to_string(s.subject_id) +
                               " carries labels " + std::to_string(it->second) + " and " +
                               std::to_string(s.label));
    }
  }
  std::vector<Index> out;
  for (const auto& [id, label] : label_of) out.push_back(label);
  return out;
}

Tensor EEGDataset::batch_tensor(const std::vector<Index>& segment_indices) const {
  const Index B = static_cast<Index>(segment_indices.size());
  Tensor batch = Tensor::zeros({B, channels, length});
  double* out = batch.data();
  for (Index b = 0; b < B; ++b) {
    const Index idx = segment_indices[static_cast<std::size_t>(b)];
    if (idx < 0 || idx >= static_cast<Index>(segments.size())) {
      throw std::invalid_argument("dataset: segment index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(segments.size()) +
                                  " segments");
    }
    const EEGSegment& seg = segments[static_cast<std::size_t>(idx)];
    for (Index i = 0; i < channels * length; ++i)
      out[b * channels * length + i] = static_cast<double>(seg.data[static_cast<std::size_t>(i)]);
  }
  return batch;
}

std::vector<std::vector<BandSpec>> default_bands(Index classes) {
  std::vector<std::vector<BandSpec>> bands;
  if (classes == 3) {
    bands = {{BandSpec{2.0, 1.0, 50.0}}, {BandSpec{40.0, 1.0, 50.0}}, {BandSpec{10.0, 1.0, 50.0}}};
    return bands;
  }
  for (Index k = 0; k < classes; ++k) {
    const double span = classes > 1 ? static_cast<double>(k) / static_cast<double>(classes - 1) : 0.0;
    bands.push_back({BandSpec{2.0 + span * 38.0, 1.0, 50.0}});
  }
  return bands;
}

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec spec;
  spec.class_bands = default_bands(spec.classes);
  return spec;
}

void SyntheticSpec::validate() const {
  if (channels < 1 || length < 1) {
    throw std::invalid_argument("synthetic: channels and length must be >= 1");
  }
  if (!(sampling_rate > 0.0)) {
    throw std::invalid_argument("synthetic: sampling rate must be positive");
  }
  if (classes < 2) throw std::invalid_argument("synthetic: class count must be >= 2");
  if (static_cast<Index>(class_bands.size()) != classes) {
    throw std::invalid_argument("synthetic: " + std::to_string(class_bands.size()) +
                                " band profiles for " + std::to_string(classes) + " classes");
  }
  const double nyquist = sampling_rate / 2.0;
  for (Index k = 0; k < classes; ++k) {
    const auto& bands = class_bands[static_cast<std::size_t>(k)];
    if (bands.empty()) {
      throw std::invalid_argument("synthetic: class " + std::to_string(k) + " has no bands");
    }
    for (const BandSpec& b : bands) {
      if (!(b.center_hz > 0.0) || b.bandwidth_hz < 0.0 || b.amplitude_uv < 0.0) {
        throw std::invalid_argument("synthetic: class " + std::to_string(k) +
                                    " has a non-positive band center or negative width/amplitude");
      }
      if (b.center_hz + b.bandwidth_hz / 2.0 >= nyquist) {
        throw std::invalid_argument("synthetic: class " + std::to_string(k) + " band at " +
                                    std::to_string(b.center_hz) + " Hz reaches the Nyquist limit " +
                                    std::to_string(nyquist) + " Hz");
      }
    }
  }
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) {
    throw std::invalid_argument("synthetic: amplitude jitter must be in [0,1)");
  }
  if (background_std < 0.0) throw std::invalid_argument("synthetic: background std must be >= 0");
  if (subjects_per_class < 1 || segments_per_subject < 1) {
    throw std::invalid_argument("synthetic: subject and segment counts must be >= 1");
  }
}

EEGDataset generate(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  EEGDataset ds;
  ds.channels = spec.channels;
  ds.length = spec.length;
  ds.classes = spec.classes;
  ds.sampling_rate = spec.sampling_rate;
  const Index C = spec.channels, L = spec.length;
  for (Index k = 0; k < spec.classes; ++k) {
    const auto& bands = spec.class_bands[static_cast<std::size_t>(k)];
    const Index nb = static_cast<Index>(bands.size());
    for (Index s = 0; s < spec.subjects_per_class; ++s) {
      const Index subject = k * spec.subjects_per_class + s;
      Rng subj_rng = derive_rng(seed, {"subject", std::to_string(subject)});
      std::vector<double> amp_scale(static_cast<std::size_t>(nb));
      for (Index b = 0; b < nb; ++b) {
        amp_scale[static_cast<std::size_t>(b)] =
            1.0 + spec.amplitude_jitter * subj_rng.uniform(-1.0, 1.0);
      }
      for (Index g = 0; g < spec.segments_per_subject; ++g) {
        Rng rng = derive_rng(seed, {"segment", std::to_string(subject), std::to_string(g)});
        std::vector<double> freq(static_cast<std::size_t>(nb));
        for (Index b = 0; b < nb; ++b) {
          const BandSpec& band = bands[static_cast<std::size_t>(b)];
          freq[static_cast<std::size_t>(b)] =
              band.center_hz + rng.uniform(-band.bandwidth_hz / 2.0, band.bandwidth_hz / 2.0);
        }
        EEGSegment seg;
        seg.label = k;
        seg.subject_id = subject;
        seg.segment_index = g;
        seg.data.resize(static_cast<std::size_t>(C * L));
        for (Index c = 0; c < C; ++c) {
          std::vector<double> phase(static_cast<std::size_t>(nb), 0.0);
          if (spec.randomize_phase) {
            for (Index b = 0; b < nb; ++b)
              phase[static_cast<std::size_t>(b)] = rng.uniform(0.0, kTwoPi);
          }
          for (Index t = 0; t < L; ++t) {
            const double time = static_cast<double>(t) / spec.sampling_rate;
            double v = 0.0;
            for (Index b = 0; b < nb; ++b) {
              const BandSpec& band = bands[static_cast<std::size_t>(b)];
              v += band.amplitude_uv * amp_scale[static_cast<std::size_t>(b)] *
                   std::sin(kTwoPi * freq[static_cast<std::size_t>(b)] * time +
                            phase[static_cast<std::size_t>(b)]);
            }
            if (spec.background_std > 0.0) v += spec.background_std * rng.normal();
            seg.data[static_cast<std::size_t>(c * L + t)] = static_cast<float>(v);
          }
        }
        ds.segments.push_back(std::move(seg));
      }
    }
  }
  return ds;
}

EEGDataset inject_noise(const EEGDataset& dataset, const NoiseInjectionSpec& spec) {
  if (spec.corrupted_channel_count < 0 || spec.corrupted_channel_count >= dataset.channels) {
    throw std::invalid_argument("noise: corrupted channel count " +
                                std::to_string(spec.corrupted_channel_count) +
                                " must be in [0," + std::to_string(dataset.channels) + ")");
  }
  if (spec.noise_std < 0.0) throw std::invalid_argument("noise: std must be >= 0");
  EEGDataset out = dataset;
  if (spec.corrupted_channel_count == 0) return out;
  const Index C = dataset.channels, L = dataset.length;
  const Index first = C - spec.corrupted_channel_count;
  for (EEGSegment& seg : out.segments) {
    Rng rng = derive_rng(spec.seed, {"noise", std::to_string(seg.subject_id),
                                     std::to_string(seg.segment_index)});
    for (Index c = first; c < C; ++c)
      for (Index t = 0; t < L; ++t) {
        const std::size_t p = static_cast<std::size_t>(c * L + t);
        seg.data[p] = static_cast<float>(static_cast<double>(seg.data[p]) + spec.noise_mean +
                                         spec.noise_std * rng.normal());
      }
  }
  return out;
}

std::vector<EEGSegment> segment(const Tensor& recording, Index window_len, Index overlap,
                                Index subject_id, Index label) {
  if (recording.rank() != 2) {
    throw std::invalid_argument("segment: recording must be [C,T], got " +
                                shape_to_string(recording.shape()));
  }
  if (window_len < 1) throw std::invalid_argument("segment: window length must be >= 1");
  if (overlap != 0) {
    throw std::invalid_argument("segment: only non-overlapping windows are supported (overlap 0)");
  }
  const Index C = recording.dim(0), T = recording.dim(1);
  std::vector<EEGSegment> out;
  if (T < window_len) {
    warn("segment: recording of length " + std::to_string(T) + " is shorter than the window " +
         std::to_string(window_len) + "; producing no segments");
    return out;
  }
  const Index n = T / window_len;
  for (Index i = 0; i < n; ++i) {
    EEGSegment seg;
    seg.subject_id = subject_id;
    seg.label = label;
    seg.segment_index = i;
    seg.data.resize(static_cast<std::size_t>(C * window_len));
    for (Index c = 0; c < C; ++c)
      for (Index t = 0; t < window_len; ++t)
        seg.data[static_cast<std::size_t>(c * window_len + t)] =
            static_cast<float>(recording.at(c, i * window_len + t));
    out.push_back(std::move(seg));
  }
  return out;
}

DatasetSplits split_by_subject(const EEGDataset& dataset, const SplitFractions& fractions,
                               std::uint64_t seed) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
  }
  // subject -> label, in first-appearance order per class
  std::map<Index, Index> label_of;
  for (const EEGSegment& s : dataset.segments) {
    auto [it, inserted] = label_of.emplace(s.subject_id, s.label);
    if (!inserted && it->second != s.label) {
      throw std::runtime_error("split: subject " + std::to_string(s.subject_id) +
                               " carries more than one label");
    }
  }
  std::map<Index, std::vector<Index>> subjects_of_class;
  for (const auto& [subject, label] : label_of) subjects_of_class[label].push_back(subject);

  // split index per subject: 0 train, 1 val, 2 test
  std::map<Index, int> split_of;
  const double fr[3] = {fractions.train, fractions.val, fractions.test};
  for (auto& [label, subjects] : subjects_of_class) {
    const Index n = static_cast<Index>(subjects.size());
    if (n < 3) {
      throw std::invalid_argument("split: class " + std::to_string(label) + " has only " +
                                  std::to_string(n) +
                                  " subjects; need at least one per split (3)");
    }
    Rng rng = derive_rng(seed, {"split", std::to_string(label)});
    shuffle(subjects, rng);
    // largest-remainder apportionment, then guarantee one subject per split
    Index count[3];
    double rem[3];
    Index assigned = 0;
    for (int i = 0; i < 3; ++i) {
      const double ideal = fr[i] * static_cast<double>(n);
      count[i] = static_cast<Index>(std::floor(ideal));
      rem[i] = ideal - std::floor(ideal);
      assigned += count[i];
    }
    while (assigned < n) {
      int best = 0;
      for (int i = 1; i < 3; ++i)
        if (rem[i] > rem[best]) best = i;
      ++count[best];
      rem[best] = -1.0;
      ++assigned;
    }
    for (int i = 0; i < 3; ++i) {
      while (count[i] == 0) {
        int donor = 0;
        for (int j = 1; j < 3; ++j)
          if (count[j] > count[donor]) donor = j;
        --count[donor];
        ++count[i];
      }
    }
    Index pos = 0;
    for (int i = 0; i < 3; ++i)
      for (Index j = 0; j < count[i]; ++j) split_of[subjects[static_cast<std::size_t>(pos++)]] = i;
  }

  DatasetSplits splits;
  EEGDataset* outs[3] = {&splits.train, &splits.val, &splits.test};
  for (int i = 0; i < 3; ++i) {
    outs[i]->channels = dataset.channels;
    outs[i]->length = dataset.length;
    outs[i]->classes = dataset.classes;
    outs[i]->sampling_rate = dataset.sampling_rate;
    outs[i]->bandpass_filtered = dataset.bandpass_filtered;
  }
  for (const EEGSegment& s : dataset.segments)
    outs[split_of.at(s.subject_id)]->segments.push_back(s);
  return splits;
}

void write_dataset(const EEGDataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  std::string header;
  header.append(kMagic, 4);
  io::append_u16(header, kFormatVersion);
  io::append_u16(header, dataset.bandpass_filtered ? kFlagBandpassFiltered : 0);
  io::append_u32(header, static_cast<std::uint32_t>(dataset.channels));
  io::append_u32(header, static_cast<std::uint32_t>(dataset.length));
  io::append_u16(header, static_cast<std::uint16_t>(dataset.classes));
  io::append_u64(header, static_cast<std::uint64_t>(dataset.segments.size()));
  io::append_f64(header, dataset.sampling_rate);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));

  const std::size_t payload = static_cast<std::size_t>(dataset.channels * dataset.length);
  for (std::size_t r = 0; r < dataset.segments.size(); ++r) {
    const EEGSegment& seg = dataset.segments[r];
    if (seg.subject_id < 0 || seg.subject_id > 0xFFFFFFFFLL) {
      throw std::invalid_argument("dataset: subject id " + std::to_string(seg.subject_id) +
                                  " does not fit the 32-bit record field");
    }
    if (seg.label < 0 || seg.label >= dataset.classes) {
      throw std::invalid_argument("dataset: record " + std::to_string(r) + " label " +
                                  std::to_string(seg.label) + " out of range");
    }
    if (seg.data.size() != payload) {
      throw std::invalid_argument("dataset: record " + std::to_string(r) + " holds " +
                                  std::to_string(seg.data.size()) + " samples, expected " +
                                  std::to_string(payload));
    }
    std::string rec;
    rec.reserve(6 + payload * 4);
    io::append_u32(rec, static_cast<std::uint32_t>(seg.subject_id));
    io::append_u16(rec, static_cast<std::uint16_t>(seg.label));
    for (float f : seg.data) io::append_f32(rec, f);
    const std::uint32_t crc = crc_of(rec);
    io::append_u32(rec, crc);
    os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!os) throw std::runtime_error("dataset: write failed for " + path);
}

EEGDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path);
  char magic[4];
  if (!io::read_exact(is, magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("dataset: bad magic in " + path);
  }
  std::uint16_t version = 0, flags = 0, classes16 = 0;
  std::uint32_t channels32 = 0, length32 = 0;
  std::uint64_t count = 0;
  double rate = 0.0;
  if (!io::get_u16(is, version) || !io::get_u16(is, flags) || !io::get_u32(is, channels32) ||
      !io::get_u32(is, length32) || !io::get_u16(is, classes16) || !io::get_u64(is, count) ||
      !io::get_f64(is, rate)) {
    throw std::runtime_error("dataset: truncated header in " + path);
  }
  if (version != kFormatVersion) {
    throw std::runtime_error("dataset: unsupported format version " + std::to_string(version) +
                             " in " + path);
  }
  if (channels32 == 0 || length32 == 0 || classes16 < 2) {
    throw std::runtime_error("dataset: invalid header dimensions in " + path);
  }
  EEGDataset ds;
  ds.channels = static_cast<Index>(channels32);
  ds.length = static_cast<Index>(length32);
  ds.classes = static_cast<Index>(classes16);
  ds.sampling_rate = rate;
  ds.bandpass_filtered = (flags & kFlagBandpassFiltered) != 0;
  const std::size_t payload = static_cast<std::size_t>(ds.channels * ds.length);
  std::map<Index, Index> next_index_of_subject;
  for (std::uint64_t r = 0; r < count; ++r) {
    std::string rec;
    rec.resize(6 + payload * 4);
    if (!io::read_exact(is, rec.data(), rec.size())) {
      throw std::runtime_error("dataset: truncated at record " + std::to_string(r) + " in " + path);
    }
    std::uint32_t stored_crc = 0;
    if (!io::get_u32(is, stored_crc)) {
      throw std::runtime_error("dataset: truncated at record " + std::to_string(r) + " in " + path);
    }
    if (crc_of(rec) != stored_crc) {
      throw std::runtime_error("dataset: checksum mismatch at record " + std::to_string(r) +
                               " in " + path);
    }
    EEGSegment seg;
    const unsigned char* p = reinterpret_cast<const unsigned char*>(rec.data());
    std::uint32_t subject = 0;
    for (int i = 0; i < 4; ++i) subject |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    const std::uint16_t label = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
    if (label >= ds.classes) {
      throw std::runtime_error("dataset: record " + std::to_string(r) + " label " +
                               std::to_string(label) + " out of range in " + path);
    }
    seg.subject_id = static_cast<Index>(subject);
    seg.label = static_cast<Index>(label);
    seg.segment_index = next_index_of_subject[seg.subject_id]++;
    seg.data.resize(payload);
    for (std::size_t i = 0; i < payload; ++i) {
      std::uint32_t bits = 0;
      const unsigned char* q = p + 6 + i * 4;
      for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(q[j]) << (8 * j);
      float f;
      std::memcpy(&f, &bits, 4);
      seg.data[i] = f;
    }
    ds.segments.push_back(std::move(seg));
  }
  return ds;
}

}  // namespace csf
