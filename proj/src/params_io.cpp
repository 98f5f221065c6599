#include "sgap/params_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sgap/common.hpp"
#include "sgap/rng.hpp"

namespace sgap {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'A', 'P'};

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
  // Little-endian scalar append; the build targets are all little endian
  // and the tests verify archives byte for byte.
  uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > n_)
      throw IntegrityError("parameter archive is truncated");
    T v;
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(size_t len) {
    if (pos_ + len > n_)
      throw IntegrityError("parameter archive is truncated");
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }

  void get_floats(float* dst, size_t count) {
    const size_t bytes = count * sizeof(float);
    if (pos_ + bytes > n_)
      throw IntegrityError("parameter archive is truncated");
    std::memcpy(dst, p_ + pos_, bytes);
    pos_ += bytes;
  }

  size_t pos() const { return pos_; }

 private:
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

}  // namespace

void save_params(const std::string& path, const ModelParams& params) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put<uint32_t>(out, kArchiveFormatVersion);

  const std::string json = params.config.dump();
  put<uint64_t>(out, json.size());
  out.insert(out.end(), json.begin(), json.end());

  put<uint32_t>(out, static_cast<uint32_t>(params.arrays.size()));
  for (const auto& [name, tensor] : params.arrays) {
    if (name.size() > 0xffff)
      throw IoError("array name too long: " + name);
    put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<uint8_t>(out, static_cast<uint8_t>(tensor.rank()));
    for (int d : tensor.shape) put<int32_t>(out, d);
    const auto* raw = reinterpret_cast<const uint8_t*>(tensor.data.data());
    out.insert(out.end(), raw, raw + tensor.numel() * sizeof(float));
  }

  put<uint64_t>(out, fnv1a64(out.data(), out.size()));

  const std::filesystem::path target(path);
  if (target.has_parent_path())
    std::filesystem::create_directories(target.parent_path());
  // Write-then-rename so a crash mid-write never leaves a half archive
  // under the final name.
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

ModelParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + sizeof(uint32_t) + sizeof(uint64_t))
    throw IoError(path + " is not a parameter archive");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError(path + " is not a parameter archive");

  const size_t body = bytes.size() - sizeof(uint64_t);
  uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + body, sizeof(uint64_t));
  if (fnv1a64(bytes.data(), body) != stored_sum)
    throw IntegrityError(path + ": checksum mismatch, archive is corrupted");

  Reader r(bytes.data(), body);
  r.get_string(4);  // magic, checked above
  const auto version = r.get<uint32_t>();
  if (version != kArchiveFormatVersion)
    throw IncompatibilityError(
        path + ": archive format version " + std::to_string(version) +
        ", this build reads version " + std::to_string(kArchiveFormatVersion));

  ModelParams params;
  const auto json_len = r.get<uint64_t>();
  const std::string json = r.get_string(json_len);
  try {
    params.config = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path + ": config block is not valid JSON: " + e.what());
  }

  const auto n_arrays = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_arrays; ++i) {
    const auto name_len = r.get<uint16_t>();
    const std::string name = r.get_string(name_len);
    const auto rank = r.get<uint8_t>();
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      const auto dim = r.get<int32_t>();
      if (dim <= 0) throw IntegrityError(path + ": bad dimension in " + name);
      shape.push_back(dim);
      numel *= dim;
    }
    TensorF t(shape);
    r.get_floats(t.data.data(), static_cast<size_t>(numel));
    if (!params.arrays.emplace(name, std::move(t)).second)
      throw IntegrityError(path + ": duplicate array " + name);
  }
  if (r.pos() != body)
    throw IntegrityError(path + ": trailing bytes after last array");
  return params;
}

}  // namespace sgap
