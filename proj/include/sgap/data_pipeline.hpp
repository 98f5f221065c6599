#ifndef SGAP_DATA_PIPELINE_HPP
#define SGAP_DATA_PIPELINE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sgap/rng.hpp"
#include "sgap/tensor.hpp"

namespace sgap {

// ============================================================================
// Corpus loading and pair construction. Images live in [-1, 1] as {C, H, W}
// float tensors everywhere in the pipeline; 8-bit PNG is the on-disk format.
// ============================================================================

enum class DatasetKind { kFingerprint, kFerg, kSynthetic };

std::string dataset_kind_name(DatasetKind kind);
DatasetKind dataset_kind_from_name(const std::string& name);

// Expression directory order for the face corpus; the index in this array is
// the attribute label.
inline constexpr std::array<const char*, 7> kExpressionOrder = {
    "anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise"};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::string root;             // directory for the disk-backed kinds
  int image_size = 64;          // images are resized to size x size
  int channels = 1;             // 1 or 3
  int epoch_pair_count = 10000; // pairs per epoch for multi-shot corpora

  // Synthetic corpus parameters.
  int identities = 20;
  int images_per_identity = 10;
  double noise_std = 0.05;
  uint64_t seed = 1234;

  std::vector<std::string> validate() const;
};

struct ImageRecord {
  TensorF image;        // {C, H, W}, values in [-1, 1]
  int identity = 0;
  int attribute = 0;
  std::string path;     // relative path, also used when exporting
};

// A pair of corpus indices plus the similarity label: 0 = same identity,
// 1 = different identity.
struct PairSample {
  int left = 0;
  int right = 0;
  int label = 0;
};

// --------------------------------------------------------------------------
// Byte <-> float value mapping. Bytes map onto [-1, 1] and back without loss
// for all 256 values.
// --------------------------------------------------------------------------

inline float byte_to_unit(uint8_t b) {
  return static_cast<float>(b) / 255.0f * 2.0f - 1.0f;
}

inline uint8_t unit_to_byte(float v) {
  float x = (v + 1.0f) / 2.0f * 255.0f;
  if (x < 0.0f) x = 0.0f;
  if (x > 255.0f) x = 255.0f;
  return static_cast<uint8_t>(std::lround(x));
}

// --------------------------------------------------------------------------
// PNG I/O (8-bit, grayscale or RGB per the channel count).
// --------------------------------------------------------------------------

TensorF read_image_png(const std::string& path, int target_size, int channels);
void write_image_png(const std::string& path, const TensorF& image);

// --------------------------------------------------------------------------
// Corpora.
// --------------------------------------------------------------------------

// Loads a corpus from disk (fingerprint or face layout) or synthesizes the
// glyph corpus. Records come back sorted by (identity, path) so corpus
// indices are stable across runs and machines.
std::vector<ImageRecord> load_corpus(const DatasetSpec& spec);

// Deterministic synthetic corpus: each identity is a constellation of five
// bright blobs at identity-specific positions; the attribute controls the
// orientation of a sinusoidal background (attribute * 45 degrees); pixel
// noise on top. Attributes cycle 0..3 so the corpus is globally balanced.
std::vector<ImageRecord> synth_glyph_corpus(const DatasetSpec& spec);

// Writes a corpus under root using the face-style directory layout recorded
// in each record's path field.
void export_corpus(const std::string& root, const std::vector<ImageRecord>& corpus);

// --------------------------------------------------------------------------
// Pairing protocols. Both are pure functions of (corpus, seed, epoch, index):
// any pair of any epoch can be regenerated in isolation, which is what makes
// checkpoint resume exact.
// --------------------------------------------------------------------------

// Two-shot protocol for a corpus holding exactly two images per identity
// (first and second capture). Epoch length is corpus.size(); the first half
// of the indices are the matched pairs (first shot, second shot, label 0),
// the second half pair each first shot with a random other identity's second
// shot (label 1).
PairSample fingerprint_pair(const std::vector<ImageRecord>& corpus,
                            uint64_t seed, int epoch, int index);

// Many-shots protocol: index < count/2 draws one identity and two distinct
// images of it (label 0); the rest draw two distinct identities and one
// image of each (label 1). count must be even.
PairSample ferg_pair(const std::vector<ImageRecord>& corpus, uint64_t seed,
                     int epoch, int index, int epoch_pair_count);

// Pairs per epoch for the protocol this corpus kind uses.
int epoch_pair_count(const DatasetSpec& spec, const std::vector<ImageRecord>& corpus);

// Protocol dispatch on the dataset kind.
PairSample sample_pair(const DatasetSpec& spec,
                       const std::vector<ImageRecord>& corpus, uint64_t seed,
                       int epoch, int index);

// A same-identity pair (two distinct images of one identity), used for the
// generator's reference batches and for evaluation pairs.
PairSample same_identity_pair(const std::vector<ImageRecord>& corpus,
                              Rng& rng);

// A pair of images of two distinct identities.
PairSample different_identity_pair(const std::vector<ImageRecord>& corpus,
                                   Rng& rng);

// Corpus indices grouped by identity, ordered by identity label.
std::vector<std::vector<int>> index_by_identity(
    const std::vector<ImageRecord>& corpus);

}  // namespace sgap

#endif  // SGAP_DATA_PIPELINE_HPP
