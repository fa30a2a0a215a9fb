#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mimlab/dataset.hpp"

using namespace mimlab;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove(path);
  }
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("synthetic images are deterministic per index") {
  SyntheticDataset a(11, 16, 16, 16, 4);
  SyntheticDataset b(11, 16, 16, 16, 4);
  CHECK(bit_equal(a.image(3), b.image(3)));
  CHECK_FALSE(bit_equal(a.image(3), a.image(4)));
  CHECK(a.label(3) == b.label(3));
  CHECK(a.id() == b.id());
}

TEST_CASE("synthetic labels cover the classes and stay in range") {
  SyntheticDataset data(5, 256, 8, 8, 4);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < data.size(); ++i) {
    const int l = data.label(i);
    REQUIRE(l >= 0);
    REQUIRE(l < 4);
    counts[static_cast<size_t>(l)]++;
  }
  for (int c : counts) CHECK(c > 10);  // roughly uniform over 256 samples
}

TEST_CASE("synthetic values stay bounded and finite") {
  SyntheticDataset data(7, 8, 16, 16, 2);
  for (int i = 0; i < data.size(); ++i) {
    const Tensor img = data.image(i);
    assert_finite(img, "synthetic image");
    for (float v : img.data) CHECK(std::abs(v) < 4.0f);
  }
}

TEST_CASE("cifar-style records decode with the documented layout") {
  TempFile f("mimlab_cifar_fixture.bin");
  // two records: label byte + 1024 R + 1024 G + 1024 B
  std::vector<unsigned char> bytes;
  for (int rec = 0; rec < 2; ++rec) {
    bytes.push_back(static_cast<unsigned char>(rec == 0 ? 3 : 7));
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 1024; ++k)
        bytes.push_back(static_cast<unsigned char>((rec * 90 + c * 50 + k) % 256));
  }
  std::ofstream out(f.path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();

  CifarDataset data(f.path, {0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f});
  CHECK(data.size() == 2);
  CHECK(data.label(0) == 3);
  CHECK(data.label(1) == 7);
  const Tensor img = data.image(0);
  CHECK(img.shape == std::vector<int64_t>{3, 32, 32});
  // pixel (c=1, y=0, x=2): raw byte (0*90 + 1*50 + 2) = 52
  const float expect = (52 / 255.0f - 0.5f) / 0.25f;
  CHECK(img.data[1 * 1024 + 2] == doctest::Approx(expect));
}

TEST_CASE("mid-record truncation is an error") {
  TempFile f("mimlab_cifar_trunc.bin");
  std::vector<char> bytes(3073 + 100, 1);
  std::ofstream out(f.path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(CifarDataset(f.path, {0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f}, -1),
                  std::runtime_error);
}

TEST_CASE("empty files are rejected") {
  TempFile f("mimlab_cifar_empty.bin");
  std::ofstream(f.path, std::ios::binary).close();
  CHECK_THROWS_AS(CifarDataset(f.path, {0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f}, -1),
                  std::runtime_error);
}

TEST_CASE("disabled augmentation is the identity") {
  SyntheticDataset data(13, 4, 16, 16, 2);
  AugmentConfig cfg;
  cfg.enabled = false;
  RngStream rng(1, "aug");
  CHECK(bit_equal(augment(data.image(0), cfg, rng), data.image(0)));
}

TEST_CASE("augmentation is deterministic under the same stream") {
  SyntheticDataset data(17, 4, 16, 16, 2);
  AugmentConfig cfg;
  cfg.enabled = true;
  RngStream r1(2, "aug", 0, 5), r2(2, "aug", 0, 5);
  const Tensor a = augment(data.image(1), cfg, r1);
  const Tensor b = augment(data.image(1), cfg, r2);
  CHECK(bit_equal(a, b));
  CHECK(a.shape == data.image(1).shape);
  assert_finite(a, "augmented image");
}

TEST_CASE("bilinear resize keeps constants and identity sizes") {
  Tensor img({3, 8, 8}, 2.5f);
  const Tensor up = bilinear_resize(img, 16, 16);
  for (float v : up.data) CHECK(v == doctest::Approx(2.5f));
  SyntheticDataset data(19, 1, 8, 8, 2);
  const Tensor same = bilinear_resize(data.image(0), 8, 8);
  for (size_t i = 0; i < same.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(data.image(0).data[i]).epsilon(1e-6));
}

TEST_CASE("dataset factory dispatches by kind") {
  DataConfig cfg;
  cfg.kind = "synthetic";
  cfg.count = 4;
  CHECK(make_dataset(cfg)->size() == 4);
  cfg.kind = "unknown";
  CHECK_THROWS_AS(make_dataset(cfg), std::invalid_argument);
}
