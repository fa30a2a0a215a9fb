#include "mimlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mimlab {

SyntheticDataset::SyntheticDataset(uint64_t seed, int count, int height, int width, int classes)
    : seed_(seed), count_(count), height_(height), width_(width), classes_(classes) {
  if (count <= 0 || height <= 0 || width <= 0 || classes <= 0)
    throw std::invalid_argument("synthetic dataset: positive extents required");
}

namespace {
constexpr int kComponents = 4;
constexpr double kOffsetRange = 0.8;  // channel DC offsets in [-0.8, 0.8]
}  // namespace

Tensor SyntheticDataset::image(int i) const {
  if (i < 0 || i >= count_) throw std::out_of_range("synthetic dataset: index out of range");
  RngStream rng(seed_, "data", 0, static_cast<uint64_t>(i));
  double offset[3];
  for (double& o : offset) o = rng.uniform(-kOffsetRange, kOffsetRange);
  double amp[kComponents], fx[kComponents], fy[kComponents], phase[3][kComponents];
  for (int j = 0; j < kComponents; ++j) {
    amp[j] = rng.uniform(0.2, 0.6);
    fx[j] = rng.uniform(0.5, 2.0);
    fy[j] = rng.uniform(0.5, 2.0);
    for (int c = 0; c < 3; ++c) phase[c][j] = rng.uniform(0.0, 6.283185307179586);
  }
  Tensor img({3, height_, width_});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) {
        double v = offset[c];
        for (int j = 0; j < kComponents; ++j)
          v += amp[j] * std::sin(6.283185307179586 *
                                     (fx[j] * x / width_ + fy[j] * y / height_) +
                                 phase[c][j]);
        img.data[static_cast<size_t>((c * height_ + y) * width_ + x)] = static_cast<float>(v);
      }
  return img;
}

int SyntheticDataset::label(int i) const {
  const Tensor img = image(i);
  double mean = 0.0;
  const int plane = height_ * width_;
  for (int k = 0; k < plane; ++k) mean += img.data[static_cast<size_t>(k)];
  mean /= plane;
  const double t = (mean + kOffsetRange) / (2.0 * kOffsetRange);
  const int bin = static_cast<int>(std::floor(t * classes_));
  return std::clamp(bin, 0, classes_ - 1);
}

std::string SyntheticDataset::id() const {
  return "synth:" + std::to_string(seed_) + ":" + std::to_string(count_) + ":" +
         std::to_string(height_) + "x" + std::to_string(width_);
}

CifarDataset::CifarDataset(std::string path, std::array<float, 3> mean, std::array<float, 3> stddev,
                           int max_count)
    : path_(std::move(path)), mean_(mean), stddev_(stddev) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path_);
  constexpr size_t kRecord = 1 + 3072;
  std::vector<char> record(kRecord);
  while (in.read(record.data(), static_cast<std::streamsize>(kRecord))) {
    labels_.push_back(static_cast<unsigned char>(record[0]));
    pixels_.insert(pixels_.end(), record.begin() + 1, record.end());
    if (max_count > 0 && static_cast<int>(labels_.size()) >= max_count) break;
  }
  if (labels_.empty()) throw std::runtime_error("dataset file holds no complete records: " + path_);
  if (in.gcount() > 0 && in.gcount() < static_cast<std::streamsize>(kRecord))
    throw std::runtime_error("dataset file ends mid-record: " + path_);
}

Tensor CifarDataset::image(int i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("dataset index out of range");
  Tensor img({3, 32, 32});
  const size_t base = static_cast<size_t>(i) * 3072;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 1024; ++k) {
      const float raw = pixels_[base + static_cast<size_t>(c) * 1024 + static_cast<size_t>(k)] / 255.0f;
      img.data[static_cast<size_t>(c * 1024 + k)] = (raw - mean_[static_cast<size_t>(c)]) /
                                                    stddev_[static_cast<size_t>(c)];
    }
  return img;
}

std::string CifarDataset::id() const {
  auto slash = path_.find_last_of('/');
  std::string stem = slash == std::string::npos ? path_ : path_.substr(slash + 1);
  for (char& c : stem)
    if (c == '/' || c == ':') c = '_';
  return "cifar:" + stem + ":" + std::to_string(size());
}

std::unique_ptr<Dataset> make_dataset(const DataConfig& cfg) {
  if (cfg.kind == "synthetic")
    return std::make_unique<SyntheticDataset>(cfg.seed, cfg.count, cfg.height, cfg.width, cfg.classes);
  if (cfg.kind == "cifar")
    return std::make_unique<CifarDataset>(cfg.path, cfg.mean, cfg.stddev,
                                          cfg.count > 0 ? cfg.count : -1);
  throw std::invalid_argument("unknown dataset kind: " + cfg.kind);
}

Tensor bilinear_resize(const Tensor& img, int out_h, int out_w) {
  if (img.rank() != 3) throw std::invalid_argument("bilinear_resize: [C,H,W] tensor required");
  const int64_t channels = img.shape[0], in_h = img.shape[1], in_w = img.shape[2];
  Tensor out({channels, out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int64_t c = 0; c < channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
      const auto y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, in_h - 1);
      const float wy = static_cast<float>(fy - y0);
      for (int x = 0; x < out_w; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
        const auto x0 = static_cast<int64_t>(fx);
        const int64_t x1 = std::min(x0 + 1, in_w - 1);
        const float wx = static_cast<float>(fx - x0);
        auto px = [&](int64_t yy, int64_t xx) {
          return img.data[static_cast<size_t>((c * in_h + yy) * in_w + xx)];
        };
        const float top = px(y0, x0) * (1.0f - wx) + px(y0, x1) * wx;
        const float bot = px(y1, x0) * (1.0f - wx) + px(y1, x1) * wx;
        out.data[static_cast<size_t>((c * out_h + y) * out_w + x)] = top * (1.0f - wy) + bot * wy;
      }
    }
  return out;
}

Tensor augment(const Tensor& img, const AugmentConfig& cfg, RngStream& rng) {
  if (!cfg.enabled) return img;
  const int64_t channels = img.shape[0];
  const int in_h = static_cast<int>(img.shape[1]), in_w = static_cast<int>(img.shape[2]);

  int crop_h = in_h, crop_w = in_w, top = 0, left = 0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = rng.uniform(cfg.scale_min, cfg.scale_max) * in_h * in_w;
    const double aspect = std::exp(rng.uniform(std::log(cfg.ratio_min), std::log(cfg.ratio_max)));
    const int w = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (w >= 1 && h >= 1 && w <= in_w && h <= in_h) {
      crop_h = h;
      crop_w = w;
      top = static_cast<int>(rng.bounded(static_cast<uint64_t>(in_h - h + 1)));
      left = static_cast<int>(rng.bounded(static_cast<uint64_t>(in_w - w + 1)));
      break;
    }
  }

  Tensor crop({channels, crop_h, crop_w});
  for (int64_t c = 0; c < channels; ++c)
    for (int y = 0; y < crop_h; ++y)
      for (int x = 0; x < crop_w; ++x)
        crop.data[static_cast<size_t>((c * crop_h + y) * crop_w + x)] =
            img.data[static_cast<size_t>((c * in_h + (top + y)) * in_w + (left + x))];

  Tensor resized = (crop_h == in_h && crop_w == in_w) ? crop : bilinear_resize(crop, in_h, in_w);

  if (rng.coin(cfg.flip_prob)) {
    Tensor flipped(resized.shape);
    for (int64_t c = 0; c < channels; ++c)
      for (int y = 0; y < in_h; ++y)
        for (int x = 0; x < in_w; ++x)
          flipped.data[static_cast<size_t>((c * in_h + y) * in_w + x)] =
              resized.data[static_cast<size_t>((c * in_h + y) * in_w + (in_w - 1 - x))];
    return flipped;
  }
  return resized;
}

}  // namespace mimlab
