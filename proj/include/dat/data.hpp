#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dat/tensor.hpp"
#include "dat/util.hpp"

namespace dat {

// Dataset names:
//   two_moons_id       2-class interleaved half circles, samples [2, 1, 1]
//   ring_ood           unlabeled annulus enclosing the moons
//   small_digits_id    10-class 12x12 rendered digit glyphs
//   small_letters_ood  unlabeled 12x12 rendered letter glyphs
//   folder:<root>      <root>/<class>/<image>.pgm|.ppm, normalized to [0, 1]
struct DatasetSpec {
  std::string name;
  std::string split = "train";  // train | test
  std::size_t size = 0;         // 0 selects the dataset default
  std::uint64_t seed = 0;
  double noise = -1.0;  // two_moons coordinate noise; negative selects the default
};

struct DatasetHandle {
  std::string name;
  std::string split;
  std::size_t num_classes = 0;  // 0 for unlabeled sets
  Tensor samples;               // [N, C, H, W]
  Labels labels;                // empty for unlabeled sets
  bool unit_range = true;       // image data lives in [0, 1]; point data is unbounded

  std::size_t size() const { return samples.batch(); }
  Shape sample_shape() const { return samples.sample_shape(); }
  Tensor batch(std::span<const std::size_t> rows) const { return samples.gather(rows); }
  Labels batch_labels(std::span<const std::size_t> rows) const;
  // Rows whose label equals `label`.
  std::vector<std::size_t> indices_of(int label) const;
};

DatasetHandle load_dataset(const DatasetSpec& spec);

// Keeps the first `n` samples (deterministic order).
DatasetHandle take(const DatasetHandle& data, std::size_t n);

// Shuffled epoch iterator; reshuffles on exhaustion.
class BatchIterator {
 public:
  BatchIterator() = default;
  BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  void reshuffle();

  std::size_t n_ = 0;
  std::size_t batch_ = 0;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> order_;
  Rng rng_;
};

struct Transform {
  std::string kind;  // none | horizontal_flip | random_crop_pad | center_crop | resize | cutout
                     // | autoaugment_like | gaussian_jitter
  double arg = 0.0;
};

struct AugmentationPolicy {
  std::string name = "none";
  std::vector<Transform> transforms;

  // "none", or transforms joined by '+', e.g. "random_crop_pad(4)+horizontal_flip".
  static AugmentationPolicy parse(const std::string& text);
  std::string to_string() const;
};

// Applies the policy sample by sample. Output has the input's shape; when
// `clamp01` it is clipped to [0, 1]. Deterministic given `seed`.
Tensor apply_policy(const AugmentationPolicy& policy, const Tensor& batch, std::uint64_t seed, bool clamp01);

struct StreamSizes {
  std::size_t classification = 64;
  std::size_t data = 64;
  std::size_t ood = 64;
};

struct StreamBatch {
  Tensor x_strong;  // classification stream, strong augmentation
  Labels labels;
  Tensor x_mild;   // generative data stream, mild augmentation
  Tensor x0_mild;  // OOD initialization stream, mild augmentation
};

// Three independently shuffled streams with independent augmentation RNGs,
// so changing one policy never perturbs the other streams.
class DualStream {
 public:
  DualStream(const DatasetHandle& data, const DatasetHandle& ood, AugmentationPolicy strong,
             AugmentationPolicy mild, StreamSizes sizes, std::uint64_t seed);

  StreamBatch next();
  // Classification stream only; the generative streams do not advance.
  StreamBatch next_classification();

  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  const DatasetHandle& data_;
  const DatasetHandle& ood_;
  AugmentationPolicy strong_, mild_;
  BatchIterator cls_, gen_, ood_it_;
  Rng strong_rng_, mild_data_rng_, mild_ood_rng_;
};

// Draws labels from the empirical label marginal of a dataset.
class LabelSampler {
 public:
  LabelSampler() = default;
  LabelSampler(const Labels& labels, std::uint64_t seed);
  Labels sample(std::size_t n);
  std::string state() const { return rng_state(rng_); }
  void restore(const std::string& s) { set_rng_state(rng_, s); }

 private:
  const Labels* labels_ = nullptr;
  Rng rng_;
};

// Class-balanced labels: n / K of each class, remainder to the lowest classes.
Labels balanced_labels(std::size_t n, std::size_t num_classes);

}  // namespace dat
