#ifndef SGAP_CONFIG_JSON_HPP
#define SGAP_CONFIG_JSON_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "sgap/data_pipeline.hpp"
#include "sgap/discriminator.hpp"
#include "sgap/generator.hpp"
#include "sgap/training.hpp"
#include "sgap/utility_harness.hpp"

namespace sgap {

// JSON (de)serialization for every config struct. Readers take present keys
// and leave absent ones at their defaults, so partial config files work as
// overrides. nlohmann keeps object keys sorted, which makes every dump of
// the same config byte-identical.

namespace detail {
template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json{{"kind", dataset_kind_name(s.kind)},
                     {"root", s.root},
                     {"image_size", s.image_size},
                     {"channels", s.channels},
                     {"epoch_pair_count", s.epoch_pair_count},
                     {"identities", s.identities},
                     {"images_per_identity", s.images_per_identity},
                     {"noise_std", s.noise_std},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, DatasetSpec& s) {
  if (j.contains("kind")) s.kind = dataset_kind_from_name(j.at("kind").get<std::string>());
  detail::maybe(j, "root", s.root);
  detail::maybe(j, "image_size", s.image_size);
  detail::maybe(j, "channels", s.channels);
  detail::maybe(j, "epoch_pair_count", s.epoch_pair_count);
  detail::maybe(j, "identities", s.identities);
  detail::maybe(j, "images_per_identity", s.images_per_identity);
  detail::maybe(j, "noise_std", s.noise_std);
  detail::maybe(j, "seed", s.seed);
}

inline void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"input_channels", c.input_channels},
                     {"conv_channels", c.conv_channels},
                     {"embedding_dim", c.embedding_dim},
                     {"dense_width", c.dense_width},
                     {"leaky_slope", c.leaky_slope},
                     {"dropout_p", c.dropout_p},
                     {"margin", c.margin},
                     {"pool_after_block", c.pool_after_block}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  detail::maybe(j, "input_size", c.input_size);
  detail::maybe(j, "input_channels", c.input_channels);
  detail::maybe(j, "conv_channels", c.conv_channels);
  detail::maybe(j, "embedding_dim", c.embedding_dim);
  detail::maybe(j, "dense_width", c.dense_width);
  detail::maybe(j, "leaky_slope", c.leaky_slope);
  detail::maybe(j, "dropout_p", c.dropout_p);
  detail::maybe(j, "margin", c.margin);
  detail::maybe(j, "pool_after_block", c.pool_after_block);
}

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"input_channels", c.input_channels},
                     {"base_channels", c.base_channels},
                     {"leaky_slope", c.leaky_slope},
                     {"dropout_p", c.dropout_p},
                     {"noise_std", c.noise_std}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  detail::maybe(j, "input_size", c.input_size);
  detail::maybe(j, "input_channels", c.input_channels);
  detail::maybe(j, "base_channels", c.base_channels);
  detail::maybe(j, "leaky_slope", c.leaky_slope);
  detail::maybe(j, "dropout_p", c.dropout_p);
  detail::maybe(j, "noise_std", c.noise_std);
}

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"lambda", c.lambda},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr_d", c.lr_d},
                     {"lr_g", c.lr_g},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"d_steps_per_g_step", c.d_steps_per_g_step},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"privatized_labels",
                      privatized_label_policy_name(c.privatized_labels)}};
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  detail::maybe(j, "lambda", c.lambda);
  detail::maybe(j, "epochs", c.epochs);
  detail::maybe(j, "batch_size", c.batch_size);
  detail::maybe(j, "lr_d", c.lr_d);
  detail::maybe(j, "lr_g", c.lr_g);
  detail::maybe(j, "adam_beta1", c.adam_beta1);
  detail::maybe(j, "adam_beta2", c.adam_beta2);
  detail::maybe(j, "adam_eps", c.adam_eps);
  detail::maybe(j, "d_steps_per_g_step", c.d_steps_per_g_step);
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("privatized_labels"))
    c.privatized_labels = privatized_label_policy_from_name(
        j.at("privatized_labels").get<std::string>());
}

inline void to_json(nlohmann::json& j, const UtilityConfig& c) {
  j = nlohmann::json{{"folds", c.folds},
                     {"classifier", proxy_classifier_name(c.classifier)},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"seed", c.seed},
                     {"pretrained_path", c.pretrained_path}};
}

inline void from_json(const nlohmann::json& j, UtilityConfig& c) {
  detail::maybe(j, "folds", c.folds);
  if (j.contains("classifier"))
    c.classifier = proxy_classifier_from_name(j.at("classifier").get<std::string>());
  detail::maybe(j, "epochs", c.epochs);
  detail::maybe(j, "batch_size", c.batch_size);
  detail::maybe(j, "lr", c.lr);
  detail::maybe(j, "adam_beta1", c.adam_beta1);
  detail::maybe(j, "adam_beta2", c.adam_beta2);
  detail::maybe(j, "adam_eps", c.adam_eps);
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "pretrained_path", c.pretrained_path);
}

// The four sections a full run needs, as a single document.
struct ExperimentConfig {
  DatasetSpec dataset;
  DiscriminatorConfig discriminator;
  GeneratorConfig generator;
  TrainingConfig training;

  // Collects every section's violations plus cross-section consistency.
  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    for (auto part : {dataset.validate(), discriminator.validate(),
                      generator.validate(), training.validate()})
      v.insert(v.end(), part.begin(), part.end());
    if (dataset.image_size != discriminator.input_size)
      v.push_back("discriminator.input_size: must match dataset.image_size");
    if (dataset.image_size != generator.input_size)
      v.push_back("generator.input_size: must match dataset.image_size");
    if (dataset.channels != discriminator.input_channels)
      v.push_back("discriminator.input_channels: must match dataset.channels");
    if (dataset.channels != generator.input_channels)
      v.push_back("generator.input_channels: must match dataset.channels");
    return v;
  }

  void validate_or_throw() const {
    auto v = validate();
    if (!v.empty()) throw ConfigError(v);
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"dataset", c.dataset},
                     {"discriminator", c.discriminator},
                     {"generator", c.generator},
                     {"training", c.training}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::maybe(j, "dataset", c.dataset);
  detail::maybe(j, "discriminator", c.discriminator);
  detail::maybe(j, "generator", c.generator);
  detail::maybe(j, "training", c.training);
}

ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace sgap

#endif  // SGAP_CONFIG_JSON_HPP
