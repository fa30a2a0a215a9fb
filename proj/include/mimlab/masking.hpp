#pragma once

// Visible/masked partition of the patch grid at ratio gamma, via independent
// random sampling or block-wise sampling, always with an exact mask count.

#include <string>
#include <vector>

#include "mimlab/patching.hpp"
#include "mimlab/rng.hpp"

namespace mimlab {

enum class SamplerKind { Random, Blockwise };
enum class ModelSize { Tiny, Small, Base, Large };

struct MaskSpec {
  PatchGrid grid;
  std::vector<int> visible;  // sorted
  std::vector<int> masked;   // sorted
  double gamma = 0.0;        // realized |m| / N
};

// round-half-up of gamma * N, clamped to [0, N]
int target_mask_count(int n, double gamma);

MaskSpec random_mask(const PatchGrid& grid, int count, RngStream& rng);
MaskSpec blockwise_mask(const PatchGrid& grid, int count, RngStream& rng);
MaskSpec sample_mask(SamplerKind kind, const PatchGrid& grid, int count, RngStream& rng);

// Default mask ratio per model size: 15% / 25% / 50% / 50%.
double default_ratio(ModelSize size);

// '.' visible, '#' masked; one grid row per line.
std::string mask_to_text(const MaskSpec& spec);

const char* to_string(SamplerKind kind);
SamplerKind sampler_from_string(const std::string& s);

}  // namespace mimlab
