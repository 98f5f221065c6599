#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <unistd.h>

#include "sgap/data_pipeline.hpp"

using namespace sgap;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_synth() {
  DatasetSpec spec;
  spec.kind = DatasetKind::kSynthetic;
  spec.image_size = 32;
  spec.identities = 8;
  spec.images_per_identity = 4;
  spec.seed = 77;
  return spec;
}

struct TempDir {
  fs::path path;
  TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("sgap_test_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("byte mapping round trips all 256 values") {
  for (int b = 0; b < 256; ++b) {
    const float v = byte_to_unit(static_cast<uint8_t>(b));
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
    CHECK(unit_to_byte(v) == b);
  }
  CHECK(byte_to_unit(0) == -1.0f);
  CHECK(byte_to_unit(255) == 1.0f);
  // Out-of-range floats clamp instead of wrapping.
  CHECK(unit_to_byte(1.7f) == 255);
  CHECK(unit_to_byte(-3.0f) == 0);
}

TEST_CASE("synthetic corpus layout, balance and determinism") {
  const auto spec = small_synth();
  auto corpus = synth_glyph_corpus(spec);
  CHECK(corpus.size() == 32);

  std::map<int, int> attr_counts;
  for (const auto& rec : corpus) {
    CHECK(rec.image.shape == std::vector<int>{1, 32, 32});
    for (float v : rec.image.data) {
      CHECK(v <= 1.0f);
      CHECK(v >= -1.0f);
    }
    attr_counts[rec.attribute]++;
  }
  // 32 images over 4 attributes: exactly 8 each.
  CHECK(attr_counts.size() == 4);
  for (const auto& [a, n] : attr_counts) CHECK(n == 8);

  auto corpus2 = synth_glyph_corpus(spec);
  for (size_t i = 0; i < corpus.size(); ++i)
    CHECK(corpus[i].image.data == corpus2[i].image.data);

  auto spec3 = spec;
  spec3.seed = 78;
  auto corpus3 = synth_glyph_corpus(spec3);
  CHECK(corpus[0].image.data != corpus3[0].image.data);
}

TEST_CASE("synthetic identities are separable by nearest centroid") {
  DatasetSpec spec;
  spec.kind = DatasetKind::kSynthetic;
  spec.image_size = 64;
  spec.identities = 20;
  spec.images_per_identity = 10;
  spec.seed = 4242;
  auto corpus = synth_glyph_corpus(spec);

  const int64_t d = corpus[0].image.numel();
  std::vector<std::vector<double>> centroids(
      20, std::vector<double>(static_cast<size_t>(d), 0.0));
  for (const auto& rec : corpus)
    for (int64_t i = 0; i < d; ++i)
      centroids[static_cast<size_t>(rec.identity)][static_cast<size_t>(i)] +=
          rec.image[i] / 10.0;

  int correct = 0;
  for (const auto& rec : corpus) {
    double best = 1e300;
    int best_id = -1;
    for (int id = 0; id < 20; ++id) {
      double dist = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        const double diff = rec.image[i] - centroids[static_cast<size_t>(id)][static_cast<size_t>(i)];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_id = id;
      }
    }
    correct += (best_id == rec.identity);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(corpus.size()) > 0.95);
}

TEST_CASE("png round trip preserves byte-quantized values") {
  TempDir tmp("png");
  auto corpus = synth_glyph_corpus(small_synth());
  const auto& img = corpus[3].image;
  const std::string path = (tmp.path / "x.png").string();
  write_image_png(path, img);
  auto back = read_image_png(path, 32, 1);
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(back[i] == byte_to_unit(unit_to_byte(img[i])));
}

TEST_CASE("export and reload keeps identities and attributes") {
  TempDir tmp("export");
  auto corpus = synth_glyph_corpus(small_synth());
  export_corpus(tmp.path.string(), corpus);

  DatasetSpec disk;
  disk.kind = DatasetKind::kFerg;
  disk.root = tmp.path.string();
  disk.image_size = 32;
  auto loaded = load_corpus(disk);
  REQUIRE(loaded.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].identity == corpus[i].identity);
    CHECK(loaded[i].attribute == corpus[i].attribute);
    CHECK(loaded[i].path == corpus[i].path);
    for (int64_t j = 0; j < corpus[i].image.numel(); ++j)
      CHECK(loaded[i].image[j] == byte_to_unit(unit_to_byte(corpus[i].image[j])));
  }
}

TEST_CASE("fingerprint corpus layout and two-shot pairing") {
  TempDir tmp("fp");
  // Six identities, two shots each, written as tiny synthetic images.
  DatasetSpec gen = small_synth();
  gen.identities = 12;
  gen.images_per_identity = 2;
  auto source = synth_glyph_corpus(gen);
  for (int id = 0; id < 6; ++id) {
    char f[32], s[32];
    std::snprintf(f, sizeof f, "f%d.png", id + 10);
    std::snprintf(s, sizeof s, "s%d.png", id + 10);
    write_image_png((tmp.path / f).string(), source[static_cast<size_t>(id * 2)].image);
    write_image_png((tmp.path / s).string(), source[static_cast<size_t>(id * 2 + 1)].image);
  }

  DatasetSpec spec;
  spec.kind = DatasetKind::kFingerprint;
  spec.root = tmp.path.string();
  spec.image_size = 32;
  auto corpus = load_corpus(spec);
  REQUIRE(corpus.size() == 12);
  CHECK(epoch_pair_count(spec, corpus) == 12);

  // First half: matched first/second shots of one identity.
  for (int i = 0; i < 6; ++i) {
    auto pr = fingerprint_pair(corpus, 5, 0, i);
    CHECK(pr.label == 0);
    CHECK(corpus[static_cast<size_t>(pr.left)].identity ==
          corpus[static_cast<size_t>(pr.right)].identity);
    CHECK(corpus[static_cast<size_t>(pr.left)].path[0] == 'f');
    CHECK(corpus[static_cast<size_t>(pr.right)].path[0] == 's');
  }
  // Second half: first shot against another identity's second shot.
  for (int i = 6; i < 12; ++i) {
    auto pr = fingerprint_pair(corpus, 5, 0, i);
    CHECK(pr.label == 1);
    CHECK(corpus[static_cast<size_t>(pr.left)].identity !=
          corpus[static_cast<size_t>(pr.right)].identity);
    CHECK(corpus[static_cast<size_t>(pr.left)].identity == i - 6);
    CHECK(corpus[static_cast<size_t>(pr.right)].path[0] == 's');
  }

  // Exact epoch label balance.
  int same = 0, diff = 0;
  for (int i = 0; i < 12; ++i)
    (fingerprint_pair(corpus, 5, 3, i).label == 0 ? same : diff)++;
  CHECK(same == 6);
  CHECK(diff == 6);

  // Deterministic in (seed, epoch, index); mismatched halves vary by epoch.
  for (int i = 0; i < 12; ++i) {
    auto a = fingerprint_pair(corpus, 5, 2, i);
    auto b = fingerprint_pair(corpus, 5, 2, i);
    CHECK(a.left == b.left);
    CHECK(a.right == b.right);
  }
  bool varies = false;
  for (int e = 1; e < 8 && !varies; ++e)
    for (int i = 6; i < 12; ++i)
      varies |= fingerprint_pair(corpus, 5, e, i).right !=
                fingerprint_pair(corpus, 5, 0, i).right;
  CHECK(varies);
}

TEST_CASE("many-shots pairing protocol") {
  auto corpus = synth_glyph_corpus(small_synth());
  const int count = 40;

  int same = 0, diff = 0;
  for (int i = 0; i < count; ++i) {
    auto pr = ferg_pair(corpus, 9, 1, i, count);
    const auto& l = corpus[static_cast<size_t>(pr.left)];
    const auto& r = corpus[static_cast<size_t>(pr.right)];
    if (i < count / 2) {
      CHECK(pr.label == 0);
      CHECK(l.identity == r.identity);
      CHECK(pr.left != pr.right);
      ++same;
    } else {
      CHECK(pr.label == 1);
      CHECK(l.identity != r.identity);
      ++diff;
    }
  }
  CHECK(same == count / 2);
  CHECK(diff == count / 2);

  // Pure function of (seed, epoch, index).
  auto a = ferg_pair(corpus, 9, 4, 7, count);
  auto b = ferg_pair(corpus, 9, 4, 7, count);
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);
  bool varies = false;
  for (int i = 0; i < count && !varies; ++i) {
    auto e0 = ferg_pair(corpus, 9, 0, i, count);
    auto e1 = ferg_pair(corpus, 9, 1, i, count);
    varies |= (e0.left != e1.left || e0.right != e1.right);
  }
  CHECK(varies);

  CHECK_THROWS_AS(ferg_pair(corpus, 9, 0, 0, 7), ConfigError);
  CHECK_THROWS_AS(ferg_pair(corpus, 9, 0, 40, count), ShapeError);
}

TEST_CASE("corpus loading error paths") {
  DatasetSpec spec;
  spec.kind = DatasetKind::kFerg;
  spec.root = "/nonexistent/sgap";
  CHECK_THROWS_AS(load_corpus(spec), IoError);

  TempDir tmp("badfp");
  auto corpus = synth_glyph_corpus(small_synth());
  write_image_png((tmp.path / "f1.png").string(), corpus[0].image);
  // s1.png missing.
  DatasetSpec fp;
  fp.kind = DatasetKind::kFingerprint;
  fp.root = tmp.path.string();
  fp.image_size = 32;
  CHECK_THROWS_AS(load_corpus(fp), IoError);

  DatasetSpec bad;
  bad.kind = DatasetKind::kSynthetic;
  bad.identities = 1;
  bad.epoch_pair_count = 3;
  CHECK_THROWS_AS(load_corpus(bad), ConfigError);
}

TEST_CASE("dataset kind names round trip") {
  for (auto kind : {DatasetKind::kFingerprint, DatasetKind::kFerg,
                    DatasetKind::kSynthetic})
    CHECK(dataset_kind_from_name(dataset_kind_name(kind)) == kind);
  CHECK_THROWS_AS(dataset_kind_from_name("tabular"), ConfigError);
}
