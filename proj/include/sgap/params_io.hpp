#ifndef SGAP_PARAMS_IO_HPP
#define SGAP_PARAMS_IO_HPP

#include <map>
#include <string>

#include <json.hpp>

#include "sgap/discriminator.hpp"
#include "sgap/generator.hpp"
#include "sgap/tensor.hpp"

namespace sgap {

// ============================================================================
// Parameter archives. A single binary file carries a JSON snapshot of the
// configuration it was produced under plus every named float array (weights,
// norm statistics, optimizer moments), closed by a checksum. Arrays are
// written in name order, so the same state always produces the same bytes.
//
// Layout, all integers little endian:
//   "SGAP"            4-byte magic
//   u32               format version
//   u64 + bytes       config JSON (canonical dump)
//   u32               array count
//   per array:        u16 name length, name bytes,
//                     u8 rank, i32 dims, f32 values
//   u64               FNV-1a of everything above
// ============================================================================

struct ModelParams {
  nlohmann::json config;
  std::map<std::string, TensorF> arrays;  // name -> tensor, iterated sorted
};

void save_params(const std::string& path, const ModelParams& params);

// Throws IoError when the file is missing or not an archive,
// IncompatibilityError on a format version mismatch, IntegrityError when
// the checksum or structure does not add up.
ModelParams load_params(const std::string& path);

// --------------------------------------------------------------------------
// Moving network state in and out of an archive. Parameters and persistent
// buffers (batch-norm running statistics) both travel; names are prefixed
// "d/" and "g/".
// --------------------------------------------------------------------------

template <typename Net, typename S>
void collect_network(Net& net, const std::string& prefix, ModelParams& out) {
  net.visit_params([&](const std::string& name, Tensor<S>& p, Tensor<S>&) {
    out.arrays[prefix + name] = p.template cast<float>();
  });
  net.visit_buffers([&](const std::string& name, Tensor<S>& b) {
    out.arrays[prefix + name] = b.template cast<float>();
  });
}

template <typename Net, typename S>
void restore_network(const ModelParams& in, Net& net,
                     const std::string& prefix) {
  auto fetch = [&](const std::string& name, Tensor<S>& t) {
    auto it = in.arrays.find(prefix + name);
    if (it == in.arrays.end())
      throw IntegrityError("archive is missing array " + prefix + name);
    if (it->second.shape != t.shape)
      throw IntegrityError("archive array " + prefix + name +
                           " has shape " + it->second.shape_str() +
                           ", expected " + t.shape_str());
    t = it->second.template cast<S>();
  };
  net.visit_params([&](const std::string& name, Tensor<S>& p, Tensor<S>&) {
    fetch(name, p);
  });
  net.visit_buffers([&](const std::string& name, Tensor<S>& b) {
    fetch(name, b);
  });
}

template <typename S>
void collect_models(Discriminator<S>& disc, Generator<S>& gen,
                    ModelParams& out) {
  collect_network<Discriminator<S>, S>(disc, "d/", out);
  collect_network<Generator<S>, S>(gen, "g/", out);
}

template <typename S>
void restore_models(const ModelParams& in, Discriminator<S>& disc,
                    Generator<S>& gen) {
  restore_network<Discriminator<S>, S>(in, disc, "d/");
  restore_network<Generator<S>, S>(in, gen, "g/");
}

}  // namespace sgap

#endif  // SGAP_PARAMS_IO_HPP
