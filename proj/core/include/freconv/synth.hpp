#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freconv/rng.hpp"
#include "freconv/tensor.hpp"

namespace freconv {

// Two-class frequency-discrimination task: class 0 images are smooth
// low-frequency fields, class 1 images are fine high-frequency textures.
// The first half of the channels carry independent realizations of the
// class pattern; the rest carry class-independent broadband distractors,
// so channel weighting has something real to suppress.
struct SynthSpec {
  std::int64_t image_size = 64;
  std::int64_t channels = 4;
  std::int64_t samples_per_class = 1000;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;

  bool operator==(const SynthSpec&) const = default;
};

template <typename T>
struct SynthDataset {
  Tensor<T> images;                  // [2*samples_per_class, channels, S, S]
  std::vector<std::int64_t> labels;  // alternating 0,1 so any prefix is near-balanced
};

namespace detail {

// Sum of four random-orientation cosines with frequency magnitude drawn
// from [f_lo, f_hi] cycles per image.
template <typename T>
void fill_cosine_field(Rng& rng, T* plane, std::int64_t size, double f_lo, double f_hi) {
  struct Wave {
    double fx, fy, phase, amp;
  };
  Wave waves[4];
  for (auto& wv : waves) {
    const double f = rng.uniform(f_lo, f_hi);
    const double theta = rng.uniform(0.0, 6.283185307179586);
    wv.fx = f * std::cos(theta);
    wv.fy = f * std::sin(theta);
    wv.phase = rng.uniform(0.0, 6.283185307179586);
    wv.amp = rng.uniform(0.5, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(size);
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& wv : waves)
        v += wv.amp * std::cos(6.283185307179586 *
                                   (wv.fx * static_cast<double>(x) * inv +
                                    wv.fy * static_cast<double>(y) * inv) +
                               wv.phase);
      plane[y * size + x] = static_cast<T>(v);
    }
}

}  // namespace detail

// Deterministic per seed: the full byte content of the dataset is a pure
// function of the spec.
template <typename T>
SynthDataset<T> gen_synth_dataset(const SynthSpec& spec) {
  if (spec.image_size < 16) throw ParamError("synthetic images need size >= 16");
  if (spec.channels < 1 || spec.samples_per_class < 1)
    throw ParamError("synthetic spec needs positive channels and samples");
  const std::int64_t total = 2 * spec.samples_per_class;
  SynthDataset<T> ds;
  ds.images = Tensor<T>(total, spec.channels, spec.image_size, spec.image_size);
  ds.labels.resize(static_cast<std::size_t>(total));

  Rng rng(spec.seed);
  const double s = static_cast<double>(spec.image_size);
  // Class 0 lives well below the half-Nyquist radius, class 1 well above;
  // distractor channels draw from the whole band, both classes alike.
  const double lo_min = 0.5, lo_max = std::max(1.5, s / 24.0);
  const double hi_min = 0.28 * s, hi_max = 0.45 * s;
  const std::int64_t signal_channels =
      spec.channels >= 4 ? spec.channels - spec.channels / 2 : spec.channels;

  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t label = i % 2;
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (std::int64_t c = 0; c < spec.channels; ++c) {
      T* plane = ds.images.data.data() + ds.images.offset(i, c, 0, 0);
      if (c >= signal_channels) {
        detail::fill_cosine_field(rng, plane, spec.image_size, lo_min, hi_max);
        for (std::int64_t p = 0; p < spec.image_size * spec.image_size; ++p)
          plane[p] = static_cast<T>(0.7 * plane[p]);
      } else if (label == 0) {
        detail::fill_cosine_field(rng, plane, spec.image_size, lo_min, lo_max);
      } else {
        detail::fill_cosine_field(rng, plane, spec.image_size, hi_min, hi_max);
      }
      if (spec.noise_sigma > 0.0)
        for (std::int64_t p = 0; p < spec.image_size * spec.image_size; ++p)
          plane[p] += static_cast<T>(rng.normal(0.0, spec.noise_sigma));
    }
  }
  return ds;
}

// Labels as a newline-delimited integer text file.
void write_labels(const std::string& path, const std::vector<std::int64_t>& labels);
std::vector<std::int64_t> read_labels(const std::string& path);

}  // namespace freconv
