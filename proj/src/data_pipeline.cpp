#include "sgap/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <set>

namespace fs = std::filesystem;

namespace sgap {

std::string dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kFingerprint: return "fingerprint";
    case DatasetKind::kFerg: return "ferg";
    case DatasetKind::kSynthetic: return "synthetic";
  }
  return "?";
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "fingerprint") return DatasetKind::kFingerprint;
  if (name == "ferg") return DatasetKind::kFerg;
  if (name == "synthetic") return DatasetKind::kSynthetic;
  throw ConfigError("dataset.kind: unknown kind '" + name + "'");
}

std::vector<std::string> DatasetSpec::validate() const {
  std::vector<std::string> v;
  if (kind != DatasetKind::kSynthetic && root.empty())
    v.push_back("dataset.root: required for disk-backed datasets");
  if (image_size < 8) v.push_back("dataset.image_size: must be >= 8");
  if (channels != 1 && channels != 3) v.push_back("dataset.channels: must be 1 or 3");
  if (epoch_pair_count < 2 || epoch_pair_count % 2 != 0)
    v.push_back("dataset.epoch_pair_count: must be even and >= 2");
  if (kind == DatasetKind::kSynthetic) {
    if (identities < 2) v.push_back("dataset.identities: must be >= 2");
    if (images_per_identity < 2)
      v.push_back("dataset.images_per_identity: must be >= 2");
    if (noise_std < 0.0) v.push_back("dataset.noise_std: must be >= 0");
  }
  return v;
}

// ----------------------------------------------------------------------------
// Synthetic glyph corpus.
// ----------------------------------------------------------------------------

std::vector<ImageRecord> synth_glyph_corpus(const DatasetSpec& spec) {
  auto violations = spec.validate();
  if (!violations.empty()) throw ConfigError(violations);

  const int s = spec.image_size;
  Rng root(spec.seed);
  std::vector<ImageRecord> corpus;
  corpus.reserve(static_cast<size_t>(spec.identities) * spec.images_per_identity);

  struct Spot {
    double cx, cy, sigma, amp;
  };

  for (int id = 0; id < spec.identities; ++id) {
    Rng rid = root.derive("identity", static_cast<uint64_t>(id));
    std::array<Spot, 5> spots;
    for (auto& sp : spots) {
      sp.cx = (0.15 + 0.7 * rid.uniform()) * s;
      sp.cy = (0.15 + 0.7 * rid.uniform()) * s;
      sp.sigma = (0.04 + 0.04 * rid.uniform()) * s;
      sp.amp = 0.7 + 0.3 * rid.uniform();
    }
    for (int k = 0; k < spec.images_per_identity; ++k) {
      const int global = id * spec.images_per_identity + k;
      const int attr = global % 4;
      const double theta = attr * (3.14159265358979323846 / 4.0);
      const double cth = std::cos(theta), sth = std::sin(theta);
      Rng rimg = root.derive("image", static_cast<uint64_t>(global));
      const double phase = rimg.uniform() * 6.283185307179586;

      ImageRecord rec;
      rec.identity = id;
      rec.attribute = attr;
      char buf[64];
      std::snprintf(buf, sizeof buf, "c%03d/c%03d_%s/img%04d.png", id, id,
                    kExpressionOrder[static_cast<size_t>(attr)], k);
      rec.path = buf;
      rec.image = TensorF({spec.channels, s, s});
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          double v = 0.35 * std::sin(2.0 * 3.141592653589793 * 3.0 *
                                         (x * cth + y * sth) / s +
                                     phase) -
                     0.2;
          for (const auto& sp : spots) {
            const double dx = x - sp.cx, dy = y - sp.cy;
            v += sp.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sp.sigma * sp.sigma));
          }
          v += rimg.gaussian() * spec.noise_std;
          if (v > 1.0) v = 1.0;
          if (v < -1.0) v = -1.0;
          for (int c = 0; c < spec.channels; ++c)
            rec.image.at3(c, y, x) = static_cast<float>(v);
        }
      }
      corpus.push_back(std::move(rec));
    }
  }
  return corpus;
}

// ----------------------------------------------------------------------------
// Disk corpora.
// ----------------------------------------------------------------------------

namespace {

std::vector<ImageRecord> load_fingerprint_corpus(const DatasetSpec& spec) {
  if (!fs::is_directory(spec.root))
    throw IoError("dataset root is not a directory: " + spec.root);

  // Collect <id> -> {f path, s path}.
  std::map<long, std::array<std::string, 2>> shots;
  for (const auto& entry : fs::directory_iterator(spec.root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    if (entry.path().extension() != ".png") continue;
    const char shot = name[0];
    if (shot != 'f' && shot != 's')
      throw IoError("unrecognized fingerprint file name: " + name);
    const std::string digits = entry.path().stem().string().substr(1);
    long id = -1;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size())
      throw IoError("unrecognized fingerprint file name: " + name);
    shots[id][shot == 'f' ? 0 : 1] = name;
  }
  if (shots.empty()) throw IoError("no fingerprint images under " + spec.root);

  std::vector<ImageRecord> corpus;
  int identity = 0;
  for (const auto& [id, pair] : shots) {
    if (pair[0].empty() || pair[1].empty())
      throw IoError("fingerprint id " + std::to_string(id) +
                    " is missing one of its two shots");
    for (const auto& name : pair) {
      ImageRecord rec;
      rec.identity = identity;
      rec.attribute = 0;
      rec.path = name;
      rec.image = read_image_png((fs::path(spec.root) / name).string(),
                                 spec.image_size, spec.channels);
      corpus.push_back(std::move(rec));
    }
    ++identity;
  }
  return corpus;
}

std::vector<ImageRecord> load_face_corpus(const DatasetSpec& spec) {
  if (!fs::is_directory(spec.root))
    throw IoError("dataset root is not a directory: " + spec.root);

  std::vector<std::string> characters;
  for (const auto& entry : fs::directory_iterator(spec.root)) {
    if (entry.is_directory()) characters.push_back(entry.path().filename().string());
  }
  std::sort(characters.begin(), characters.end());
  if (characters.empty()) throw IoError("no character directories under " + spec.root);

  std::vector<ImageRecord> corpus;
  for (size_t ci = 0; ci < characters.size(); ++ci) {
    const fs::path cdir = fs::path(spec.root) / characters[ci];
    for (const auto& sub : fs::directory_iterator(cdir)) {
      if (!sub.is_directory()) continue;
      const std::string dir_name = sub.path().filename().string();
      const std::string prefix = characters[ci] + "_";
      if (dir_name.rfind(prefix, 0) != 0)
        throw IoError("unrecognized expression directory: " + dir_name);
      const std::string expr = dir_name.substr(prefix.size());
      const auto it = std::find_if(
          kExpressionOrder.begin(), kExpressionOrder.end(),
          [&](const char* e) { return expr == e; });
      if (it == kExpressionOrder.end())
        throw IoError("unknown expression '" + expr + "' in " + dir_name);
      const int attr = static_cast<int>(it - kExpressionOrder.begin());

      std::vector<std::string> files;
      for (const auto& f : fs::directory_iterator(sub.path())) {
        if (f.is_regular_file() && f.path().extension() == ".png")
          files.push_back(f.path().filename().string());
      }
      std::sort(files.begin(), files.end());
      for (const auto& fname : files) {
        ImageRecord rec;
        rec.identity = static_cast<int>(ci);
        rec.attribute = attr;
        rec.path = characters[ci] + "/" + dir_name + "/" + fname;
        rec.image = read_image_png((sub.path() / fname).string(), spec.image_size,
                                   spec.channels);
        corpus.push_back(std::move(rec));
      }
    }
  }
  if (corpus.empty()) throw IoError("no images under " + spec.root);
  std::sort(corpus.begin(), corpus.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return a.identity != b.identity ? a.identity < b.identity : a.path < b.path;
  });
  return corpus;
}

}  // namespace

std::vector<ImageRecord> load_corpus(const DatasetSpec& spec) {
  auto violations = spec.validate();
  if (!violations.empty()) throw ConfigError(violations);
  switch (spec.kind) {
    case DatasetKind::kSynthetic: return synth_glyph_corpus(spec);
    case DatasetKind::kFingerprint: return load_fingerprint_corpus(spec);
    case DatasetKind::kFerg: return load_face_corpus(spec);
  }
  throw ConfigError("dataset.kind: unknown kind");
}

void export_corpus(const std::string& root, const std::vector<ImageRecord>& corpus) {
  for (const auto& rec : corpus)
    write_image_png((fs::path(root) / rec.path).string(), rec.image);
}

// ----------------------------------------------------------------------------
// Pairing.
// ----------------------------------------------------------------------------

std::vector<std::vector<int>> index_by_identity(
    const std::vector<ImageRecord>& corpus) {
  std::map<int, std::vector<int>> groups;
  for (size_t i = 0; i < corpus.size(); ++i)
    groups[corpus[i].identity].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (auto& [id, idx] : groups) out.push_back(std::move(idx));
  return out;
}

PairSample fingerprint_pair(const std::vector<ImageRecord>& corpus,
                            uint64_t seed, int epoch, int index) {
  const auto groups = index_by_identity(corpus);
  const int p = static_cast<int>(groups.size());
  if (p < 2) throw DegenerateSampleError("two-shot pairing needs >= 2 identities");
  for (const auto& g : groups)
    if (g.size() != 2)
      throw DegenerateSampleError(
          "two-shot pairing needs exactly two images per identity");
  if (index < 0 || index >= 2 * p)
    throw ShapeError("pair index out of range: " + std::to_string(index));

  if (index < p)  // matched pair: first shot with its own second shot
    return {groups[static_cast<size_t>(index)][0],
            groups[static_cast<size_t>(index)][1], 0};

  const int j = index - p;
  Rng rng = Rng(seed).derive("fpair").derive(static_cast<uint64_t>(epoch))
                .derive(static_cast<uint64_t>(index));
  int other = static_cast<int>(rng.below(static_cast<uint64_t>(p - 1)));
  if (other >= j) ++other;
  return {groups[static_cast<size_t>(j)][0], groups[static_cast<size_t>(other)][1], 1};
}

PairSample same_identity_pair(const std::vector<ImageRecord>& corpus, Rng& rng) {
  const auto groups = index_by_identity(corpus);
  std::vector<int> eligible;
  for (size_t i = 0; i < groups.size(); ++i)
    if (groups[i].size() >= 2) eligible.push_back(static_cast<int>(i));
  if (eligible.empty())
    throw DegenerateSampleError("no identity has two images to pair");
  const auto& g = groups[static_cast<size_t>(
      eligible[rng.below(eligible.size())])];
  const int a = static_cast<int>(rng.below(g.size()));
  int b = static_cast<int>(rng.below(g.size() - 1));
  if (b >= a) ++b;
  return {g[static_cast<size_t>(a)], g[static_cast<size_t>(b)], 0};
}

PairSample different_identity_pair(const std::vector<ImageRecord>& corpus,
                                   Rng& rng) {
  const auto groups = index_by_identity(corpus);
  if (groups.size() < 2)
    throw DegenerateSampleError("pairing needs >= 2 identities");
  const int ia = static_cast<int>(rng.below(groups.size()));
  int ib = static_cast<int>(rng.below(groups.size() - 1));
  if (ib >= ia) ++ib;
  const auto& ga = groups[static_cast<size_t>(ia)];
  const auto& gb = groups[static_cast<size_t>(ib)];
  return {ga[rng.below(ga.size())], gb[rng.below(gb.size())], 1};
}

PairSample ferg_pair(const std::vector<ImageRecord>& corpus, uint64_t seed,
                     int epoch, int index, int count) {
  if (count < 2 || count % 2 != 0)
    throw ConfigError("epoch_pair_count: must be even and >= 2");
  if (index < 0 || index >= count)
    throw ShapeError("pair index out of range: " + std::to_string(index));
  Rng rng = Rng(seed).derive("mpair").derive(static_cast<uint64_t>(epoch))
                .derive(static_cast<uint64_t>(index));
  if (index < count / 2) return same_identity_pair(corpus, rng);
  return different_identity_pair(corpus, rng);
}

int epoch_pair_count(const DatasetSpec& spec,
                     const std::vector<ImageRecord>& corpus) {
  if (spec.kind == DatasetKind::kFingerprint)
    return static_cast<int>(corpus.size());
  return spec.epoch_pair_count;
}

PairSample sample_pair(const DatasetSpec& spec,
                       const std::vector<ImageRecord>& corpus, uint64_t seed,
                       int epoch, int index) {
  if (spec.kind == DatasetKind::kFingerprint)
    return fingerprint_pair(corpus, seed, epoch, index);
  return ferg_pair(corpus, seed, epoch, index, spec.epoch_pair_count);
}

}  // namespace sgap
