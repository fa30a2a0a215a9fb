#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mimlab/masking.hpp"
#include "mimlab/model.hpp"

using namespace mimlab;

namespace {

void check_invariants(const MaskSpec& s, int count) {
  CHECK(static_cast<int>(s.masked.size()) == count);
  CHECK(static_cast<int>(s.visible.size() + s.masked.size()) == s.grid.n());
  CHECK(std::is_sorted(s.visible.begin(), s.visible.end()));
  CHECK(std::is_sorted(s.masked.begin(), s.masked.end()));
  std::vector<char> seen(s.grid.n(), 0);
  for (int i : s.visible) seen[i] += 1;
  for (int i : s.masked) seen[i] += 1;
  for (char c : seen) CHECK(c == 1);  // disjoint and covering
  CHECK(s.gamma == doctest::Approx(static_cast<double>(count) / s.grid.n()));
}

// 4-connected components of the masked cells
int masked_components(const MaskSpec& s) {
  std::vector<char> m(s.grid.n(), 0);
  for (int i : s.masked) m[i] = 1;
  std::vector<char> seen(s.grid.n(), 0);
  int components = 0;
  std::vector<int> stack;
  for (int start : s.masked) {
    if (seen[start]) continue;
    ++components;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int r = cur / s.grid.w, c = cur % s.grid.w;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (auto [nr, nc] : nbr) {
        if (nr < 0 || nr >= s.grid.h || nc < 0 || nc >= s.grid.w) continue;
        const int ni = nr * s.grid.w + nc;
        if (m[ni] && !seen[ni]) {
          seen[ni] = 1;
          stack.push_back(ni);
        }
      }
    }
  }
  return components;
}

}  // namespace

TEST_CASE("target_mask_count rounds half up and clamps") {
  CHECK(target_mask_count(196, 0.50) == 98);
  CHECK(target_mask_count(196, 0.15) == 29);  // 29.4 rounds down
  CHECK(target_mask_count(196, 0.25) == 49);
  CHECK(target_mask_count(10, 0.25) == 3);    // 2.5 rounds up
  CHECK(target_mask_count(196, 0.0) == 0);
  CHECK(target_mask_count(196, 1.0) == 196);
  CHECK_THROWS_AS(target_mask_count(196, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(target_mask_count(196, 1.1), std::invalid_argument);
}

TEST_CASE("random_mask edge counts") {
  const PatchGrid grid{4, 4, 1};
  RngStream rng(1, "m");
  const MaskSpec none = random_mask(grid, 0, rng);
  CHECK(none.masked.empty());
  CHECK(static_cast<int>(none.visible.size()) == 16);
  const MaskSpec all = random_mask(grid, 16, rng);
  CHECK(all.visible.empty());
  CHECK(static_cast<int>(all.masked.size()) == 16);
  CHECK_THROWS_AS(random_mask(grid, 17, rng), std::invalid_argument);
  CHECK_THROWS_AS(random_mask(grid, -1, rng), std::invalid_argument);
}

TEST_CASE("blockwise_mask edge counts") {
  const PatchGrid grid{4, 4, 1};
  RngStream rng(2, "m");
  const MaskSpec none = blockwise_mask(grid, 0, rng);
  CHECK(none.masked.empty());
  const MaskSpec all = blockwise_mask(grid, 16, rng);
  CHECK(static_cast<int>(all.masked.size()) == 16);
  CHECK(all.visible.empty());
}

TEST_CASE("both samplers keep exact counts over many seeds") {
  const PatchGrid grid{14, 14, 1};
  const int count = target_mask_count(grid.n(), 0.5);
  for (uint64_t seed = 0; seed < 500; ++seed) {
    RngStream r1(seed, "mask", 0, 0), r2(seed, "mask", 0, 1);
    check_invariants(random_mask(grid, count, r1), count);
    check_invariants(blockwise_mask(grid, count, r2), count);
  }
}

TEST_CASE("identical streams give identical masks") {
  const PatchGrid grid{8, 8, 1};
  RngStream a(55, "mask", 3, 9), b(55, "mask", 3, 9);
  const MaskSpec ma = blockwise_mask(grid, 32, a), mb = blockwise_mask(grid, 32, b);
  CHECK(ma.masked == mb.masked);
  CHECK(ma.visible == mb.visible);
}

TEST_CASE("random_mask is uniform over cells") {
  // Monte-Carlo oracle: 4x4 grid at count 8, each cell masked ~50%
  const PatchGrid grid{4, 4, 1};
  std::vector<int> hits(16, 0);
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    RngStream rng(1234, "mc", 0, static_cast<uint64_t>(d));
    for (int i : random_mask(grid, 8, rng).masked) hits[static_cast<size_t>(i)]++;
  }
  for (int h : hits) {
    const double freq = static_cast<double>(h) / draws;
    CHECK(freq > 0.48);
    CHECK(freq < 0.52);
  }
}

TEST_CASE("blockwise masks are more contiguous than random ones") {
  const PatchGrid grid{14, 14, 1};
  const int count = target_mask_count(grid.n(), 0.5);
  double sum_rand = 0.0, sum_block = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    RngStream r1(77, "mc-rand", 0, static_cast<uint64_t>(s));
    RngStream r2(77, "mc-block", 0, static_cast<uint64_t>(s));
    sum_rand += masked_components(random_mask(grid, count, r1));
    sum_block += masked_components(blockwise_mask(grid, count, r2));
  }
  CHECK(sum_block / seeds < sum_rand / seeds);
}

TEST_CASE("default ratios follow the size table") {
  CHECK(default_ratio(ModelSize::Tiny) == 0.15);
  CHECK(default_ratio(ModelSize::Small) == 0.25);
  CHECK(default_ratio(ModelSize::Base) == 0.50);
  CHECK(default_ratio(ModelSize::Large) == 0.50);
}

TEST_CASE("default ratio is non-decreasing in model size") {
  const double r[] = {default_ratio(ModelSize::Tiny), default_ratio(ModelSize::Small),
                      default_ratio(ModelSize::Base), default_ratio(ModelSize::Large)};
  for (int i = 1; i < 4; ++i) CHECK(r[i] >= r[i - 1]);
}

TEST_CASE("the test-only preset has no table entry") {
  CHECK_THROWS_AS(model_size_of(Preset::Micro), std::invalid_argument);
}

TEST_CASE("mask_to_text draws the grid") {
  const PatchGrid grid{2, 3, 1};
  MaskSpec s;
  s.grid = grid;
  s.visible = {1, 3, 4};
  s.masked = {0, 2, 5};
  CHECK(mask_to_text(s) == "#.#\n..#\n");
}
