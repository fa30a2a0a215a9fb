#pragma once

// Image <-> patch-sequence conversion and the fixed 2-D sine-cosine position
// table. Patch order is row-major over the grid (top-left to bottom-right);
// index i sits at grid coordinates (i / w, i % w).

#include "mimlab/tensor.hpp"

namespace mimlab {

struct PatchGrid {
  int h = 0;  // rows of patches
  int w = 0;  // cols of patches
  int patch = 0;  // patch side in pixels

  int n() const { return h * w; }
  int row_of(int i) const { return i / w; }
  int col_of(int i) const { return i % w; }
};

inline PatchGrid grid_for(int height, int width, int patch) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0)
    throw std::invalid_argument("image extents must be divisible by the patch size");
  return PatchGrid{height / patch, width / patch, patch};
}

// img [3,H,W] -> [N, P*P*3]; each patch vector is channel-major, then pixel
// row, then pixel column.
template <typename S>
TensorT<S> patchify(const TensorT<S>& img, int patch) {
  if (img.rank() != 3 || img.shape[0] != 3) throw std::invalid_argument("patchify: [3,H,W] image required");
  const int64_t c = img.shape[0], height = img.shape[1], width = img.shape[2];
  const PatchGrid g = grid_for(static_cast<int>(height), static_cast<int>(width), patch);
  TensorT<S> out({static_cast<int64_t>(g.n()), static_cast<int64_t>(c) * patch * patch});
  for (int pi = 0; pi < g.h; ++pi)
    for (int pj = 0; pj < g.w; ++pj) {
      const int64_t row = static_cast<int64_t>(pi) * g.w + pj;
      int64_t k = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) {
            const int64_t iy = static_cast<int64_t>(pi) * patch + y;
            const int64_t ix = static_cast<int64_t>(pj) * patch + x;
            out.at(row, k++) = img.data[static_cast<size_t>((ch * height + iy) * width + ix)];
          }
    }
  return out;
}

template <typename S>
TensorT<S> unpatchify(const TensorT<S>& patches, const PatchGrid& g) {
  const int64_t c = 3;
  if (patches.rank() != 2 || patches.rows() != g.n() || patches.cols() != c * g.patch * g.patch)
    throw std::invalid_argument("unpatchify: shape does not match grid");
  TensorT<S> img({c, static_cast<int64_t>(g.h) * g.patch, static_cast<int64_t>(g.w) * g.patch});
  const int64_t height = img.shape[1], width = img.shape[2];
  for (int pi = 0; pi < g.h; ++pi)
    for (int pj = 0; pj < g.w; ++pj) {
      const int64_t row = static_cast<int64_t>(pi) * g.w + pj;
      int64_t k = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int y = 0; y < g.patch; ++y)
          for (int x = 0; x < g.patch; ++x) {
            const int64_t iy = static_cast<int64_t>(pi) * g.patch + y;
            const int64_t ix = static_cast<int64_t>(pj) * g.patch + x;
            img.data[static_cast<size_t>((ch * height + iy) * width + ix)] = patches.at(row, k++);
          }
    }
  return img;
}

// Fixed 2-D sine-cosine table [h*w, d]. First d/2 columns encode the row
// coordinate, last d/2 the column; within each half, sines then cosines.
// Pure function of (h, w, d).
template <typename S>
TensorT<S> sincos_pos_embed(int h, int w, int d) {
  if (d % 4 != 0) throw std::invalid_argument("sincos_pos_embed: d must be divisible by 4");
  const int half = d / 2;
  const int quarter = d / 4;
  TensorT<S> table({static_cast<int64_t>(h) * w, static_cast<int64_t>(d)});
  for (int i = 0; i < h * w; ++i) {
    const double coords[2] = {static_cast<double>(i / w), static_cast<double>(i % w)};
    for (int axis = 0; axis < 2; ++axis) {
      const int base = axis * half;
      for (int k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / quarter);
        const double angle = coords[axis] * omega;
        table.at(i, base + k) = static_cast<S>(std::sin(angle));
        table.at(i, base + quarter + k) = static_cast<S>(std::cos(angle));
      }
    }
  }
  return table;
}

}  // namespace mimlab
