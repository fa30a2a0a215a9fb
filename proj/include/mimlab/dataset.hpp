#pragma once

// Data sources and augmentation. Two readers: CIFAR-10-style binary records
// (1 label byte + 3072 pixel bytes per record: 1024 R, then G, then B, each a
// row-major 32x32 plane) and a seeded synthetic generator producing smooth
// low-frequency sinusoid mixtures. Images come out standardized [3,H,W].

#include <array>
#include <memory>
#include <string>

#include "mimlab/rng.hpp"
#include "mimlab/tensor.hpp"

namespace mimlab {

struct DataConfig {
  std::string kind = "synthetic";  // "synthetic" | "cifar"
  int count = 128;
  int height = 16;
  int width = 16;
  int classes = 4;
  uint64_t seed = 11;
  std::string path;  // cifar record file
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev{0.25f, 0.25f, 0.25f};
};

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int size() const = 0;
  virtual Tensor image(int i) const = 0;  // [3,H,W], standardized
  virtual int label(int i) const = 0;
  virtual int classes() const = 0;
  virtual std::string id() const = 0;
};

// Smooth random images; label is a deterministic function of channel 0's
// mean brightness (binned into `classes` equal intervals).
class SyntheticDataset : public Dataset {
 public:
  SyntheticDataset(uint64_t seed, int count, int height, int width, int classes);
  int size() const override { return count_; }
  Tensor image(int i) const override;
  int label(int i) const override;
  int classes() const override { return classes_; }
  std::string id() const override;

 private:
  uint64_t seed_;
  int count_, height_, width_, classes_;
};

class CifarDataset : public Dataset {
 public:
  CifarDataset(std::string path, std::array<float, 3> mean, std::array<float, 3> stddev,
               int max_count = -1);
  int size() const override { return static_cast<int>(labels_.size()); }
  Tensor image(int i) const override;
  int label(int i) const override { return labels_.at(static_cast<size_t>(i)); }
  int classes() const override { return 10; }
  std::string id() const override;

 private:
  std::string path_;
  std::vector<uint8_t> pixels_;  // count * 3072
  std::vector<int> labels_;
  std::array<float, 3> mean_, stddev_;
};

std::unique_ptr<Dataset> make_dataset(const DataConfig& cfg);

struct AugmentConfig {
  bool enabled = true;
  double scale_min = 0.2;   // crop area fraction
  double scale_max = 1.0;
  double ratio_min = 0.75;  // crop aspect
  double ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
};

// Random resized crop (bilinear, back to the input size) + horizontal flip.
Tensor augment(const Tensor& img, const AugmentConfig& cfg, RngStream& rng);

Tensor bilinear_resize(const Tensor& img, int out_h, int out_w);

}  // namespace mimlab
