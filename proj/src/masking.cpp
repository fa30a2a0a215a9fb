#include "mimlab/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mimlab {

int target_mask_count(int n, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1]");
  const int count = static_cast<int>(std::floor(gamma * n + 0.5));
  return std::clamp(count, 0, n);
}

namespace {

MaskSpec finish(const PatchGrid& grid, std::vector<char>& is_masked) {
  MaskSpec spec;
  spec.grid = grid;
  for (int i = 0; i < grid.n(); ++i)
    (is_masked[i] ? spec.masked : spec.visible).push_back(i);
  spec.gamma = static_cast<double>(spec.masked.size()) / grid.n();
  return spec;
}

void check_count(const PatchGrid& grid, int count) {
  if (count < 0 || count > grid.n()) throw std::invalid_argument("mask count out of range");
}

}  // namespace

MaskSpec random_mask(const PatchGrid& grid, int count, RngStream& rng) {
  check_count(grid, count);
  const int n = grid.n();
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  // partial Fisher-Yates: first `count` entries are a uniform sample
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.bounded(static_cast<uint64_t>(n - i)));
    std::swap(perm[i], perm[j]);
  }
  std::vector<char> is_masked(n, 0);
  for (int i = 0; i < count; ++i) is_masked[perm[i]] = 1;
  return finish(grid, is_masked);
}

MaskSpec blockwise_mask(const PatchGrid& grid, int count, RngStream& rng) {
  check_count(grid, count);
  const int n = grid.n();
  std::vector<char> is_masked(n, 0);
  int masked_so_far = 0;
  while (masked_so_far < count) {
    const int lo = std::min(16, count);
    const int hi = std::max(lo, count - masked_so_far);
    const int area = lo + static_cast<int>(rng.bounded(static_cast<uint64_t>(hi - lo + 1)));
    // log-uniform aspect ratio in [0.3, 10/3]
    const double log_lo = std::log(0.3), log_hi = std::log(10.0 / 3.0);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    int bh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    int bw = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    bh = std::clamp(bh, 1, grid.h);
    bw = std::clamp(bw, 1, grid.w);
    const int top = static_cast<int>(rng.bounded(static_cast<uint64_t>(grid.h - bh + 1)));
    const int left = static_cast<int>(rng.bounded(static_cast<uint64_t>(grid.w - bw + 1)));
    for (int r = top; r < top + bh; ++r)
      for (int c = left; c < left + bw; ++c) {
        const int i = r * grid.w + c;
        if (!is_masked[i]) {
          is_masked[i] = 1;
          ++masked_so_far;
        }
      }
  }
  // trim overshoot so the count is exact
  while (masked_so_far > count) {
    const int k = static_cast<int>(rng.bounded(static_cast<uint64_t>(masked_so_far)));
    int seen = 0;
    for (int i = 0; i < n; ++i) {
      if (is_masked[i] && seen++ == k) {
        is_masked[i] = 0;
        --masked_so_far;
        break;
      }
    }
  }
  return finish(grid, is_masked);
}

MaskSpec sample_mask(SamplerKind kind, const PatchGrid& grid, int count, RngStream& rng) {
  return kind == SamplerKind::Random ? random_mask(grid, count, rng) : blockwise_mask(grid, count, rng);
}

double default_ratio(ModelSize size) {
  switch (size) {
    case ModelSize::Tiny: return 0.15;
    case ModelSize::Small: return 0.25;
    case ModelSize::Base: return 0.50;
    case ModelSize::Large: return 0.50;
  }
  throw std::invalid_argument("unknown model size");
}

std::string mask_to_text(const MaskSpec& spec) {
  std::string out;
  std::vector<char> is_masked(spec.grid.n(), 0);
  for (int i : spec.masked) is_masked[i] = 1;
  for (int r = 0; r < spec.grid.h; ++r) {
    for (int c = 0; c < spec.grid.w; ++c) out += is_masked[r * spec.grid.w + c] ? '#' : '.';
    out += '\n';
  }
  return out;
}

const char* to_string(SamplerKind kind) {
  return kind == SamplerKind::Random ? "random" : "blockwise";
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "random") return SamplerKind::Random;
  if (s == "blockwise") return SamplerKind::Blockwise;
  throw std::invalid_argument("unknown sampler kind: " + s);
}

}  // namespace mimlab
