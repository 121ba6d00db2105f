#pragma once

#include "eventlm/autodiff.hpp"
#include "eventlm/encode.hpp"

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace eventlm {

class Rng;

struct BackboneConfig {
    int num_layers{2};
    int num_heads{2};
    int model_dim{32};
    int ffn_dim{128};
    int max_seq_len{4096};
    double dropout_rate{0.0};

    void validate() const;
};

struct LayerParams {
    ad::ParameterPtr ln1_gain, ln1_bias;
    ad::ParameterPtr w_q, w_k, w_v, w_o;  // D x D, applied as x W^T
    ad::ParameterPtr ln2_gain, ln2_bias;
    ad::ParameterPtr ffn_w1, ffn_b1;  // F x D, 1 x F
    ad::ParameterPtr ffn_w2, ffn_b2;  // D x F, 1 x D
};

struct BackboneParams {
    ad::ParameterPtr token_embedding;  // V x D
    std::vector<LayerParams> layers;
    ad::ParameterPtr final_gain, final_bias;

    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const;
};

[[nodiscard]] BackboneParams init_backbone(const BackboneConfig& cfg, int vocab_size, Rng& rng);

enum class LoRATarget { q, k, v, o };

[[nodiscard]] std::string to_string(LoRATarget t);
// Parses a subset string such as "QKVO" or "qv".
[[nodiscard]] std::set<LoRATarget> parse_lora_targets(const std::string& s);
[[nodiscard]] std::string lora_targets_string(const std::set<LoRATarget>& targets);

struct LoRAConfig {
    int rank{16};
    double alpha{16.0};
    double dropout{0.05};
    std::set<LoRATarget> targets{LoRATarget::q, LoRATarget::k, LoRATarget::v, LoRATarget::o};

    [[nodiscard]] double scaling() const { return alpha / static_cast<double>(rank); }
};

struct LoRAPair {
    ad::ParameterPtr a;  // r x D
    ad::ParameterPtr b;  // D x r
};

struct LoRAParams {
    LoRAConfig config;
    // adapters[layer][target] is empty when the target is not adapted.
    std::vector<std::array<std::optional<LoRAPair>, 4>> adapters;

    [[nodiscard]] const std::optional<LoRAPair>& at(std::size_t layer, LoRATarget t) const {
        return adapters.at(layer)[static_cast<std::size_t>(t)];
    }
    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const;
    [[nodiscard]] std::size_t trainable_count() const;
};

[[nodiscard]] LoRAParams attach_lora(const BackboneParams& params, const BackboneConfig& bcfg, const LoRAConfig& cfg,
                                     std::uint64_t seed);

// W + (alpha/r) B A folded into fresh base weights; used to check the
// two-matmul adapter path.
[[nodiscard]] BackboneParams merge_lora(const BackboneParams& params, const LoRAParams& lora);

enum class ForwardMode { train, infer };

// Hidden states (L x D) for a stream of input embeddings (L x D). Position
// encodings over the stream index are added internally. `rng` drives dropout
// and is only used in train mode.
[[nodiscard]] ad::Var forward(const ad::Var& stream, const BackboneParams& params, const LoRAParams* lora,
                              const BackboneConfig& cfg, ForwardMode mode, Rng* rng = nullptr);

[[nodiscard]] ad::Matrix forward(const AssembledSequence& assembled, const BackboneParams& params,
                                 const LoRAParams* lora, const BackboneConfig& cfg);

// h_i = hidden row at boundaries[i].
[[nodiscard]] ad::Var extract_history_vectors(const ad::Var& hidden, const std::vector<int>& boundaries);

[[nodiscard]] std::size_t count_parameters(const std::vector<ad::ParameterPtr>& params);

}  // namespace eventlm
