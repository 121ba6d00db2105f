#pragma once

#include "eventlm/backbone.hpp"
#include "eventlm/core.hpp"
#include "eventlm/encode.hpp"
#include "eventlm/heads.hpp"
#include "eventlm/tpp.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eventlm {

enum class TrainableScope { all, lora_and_heads, heads_only };

[[nodiscard]] std::string to_string(TrainableScope s);
[[nodiscard]] TrainableScope parse_trainable_scope(const std::string& s);

struct ModelConfig {
    BackboneConfig backbone;
    TemporalVariant temporal{TemporalVariant::sinusoidal};
    IntensityKind intensity{IntensityKind::thp};
    PromptSpec prompt;
    TimeTarget time_target{TimeTarget::gap};
};

// Everything needed to turn an event sequence into history vectors and
// predictions: vocabulary, per-type token lists, backbone, optional adapters,
// temporal encoder, and the three heads.
struct Model {
    ModelConfig config;
    Vocab vocab;
    std::vector<EventType> types;
    std::vector<TokenizedEvent> type_tokens;
    std::vector<int> prompt_tokens;
    BackboneParams backbone;
    TemporalEncodingSpec temporal;
    std::optional<LoRAParams> lora;
    IntensityHead intensity;
    TypeHead type_head;
    TimeHead time_head;

    [[nodiscard]] int num_types() const { return static_cast<int>(types.size()); }
    [[nodiscard]] StreamLayout layout(const EventSequence& seq) const;

    [[nodiscard]] std::vector<ad::ParameterPtr> base_parameters() const;  // backbone + temporal
    [[nodiscard]] std::vector<ad::ParameterPtr> head_parameters() const;
    [[nodiscard]] std::vector<ad::ParameterPtr> lora_parameters() const;
    [[nodiscard]] std::vector<ad::ParameterPtr> all_parameters() const;
    [[nodiscard]] std::vector<ad::ParameterPtr> trainable_parameters() const;

    // Marks parameters trainable per scope; everything else is frozen.
    void set_scope(TrainableScope scope);
    void attach_adapters(const LoRAConfig& cfg, std::uint64_t seed);
    void zero_grad() const;
};

// Model shaped for `ds` (its types, and the configured prompt). The time head
// bias starts at the mean inter-event gap of `ds`.
[[nodiscard]] Model build_model(const Dataset& ds, const ModelConfig& cfg, std::uint64_t seed);

// Model from an explicit vocabulary and type table (checkpoint loading).
[[nodiscard]] Model create_model(const ModelConfig& cfg, Vocab vocab, std::vector<EventType> types,
                                 double initial_gap, std::uint64_t seed);

// h_1..h_n as an n x H graph node.
[[nodiscard]] ad::Var history_graph(const Model& model, const EventSequence& seq, ForwardMode mode,
                                    Rng* rng = nullptr);
[[nodiscard]] ad::Matrix history_vectors(const Model& model, const EventSequence& seq);

struct SequenceTerms {
    ad::Var log_likelihood;
    ad::Var type_loss;
    ad::Var time_loss;
    ad::Var objective;  // -LL + beta_type * type + beta_time * time
};

// `salt` selects the random stream (Monte Carlo draws and dropout) so that
// repeated evaluations can share or vary their randomness deterministically.
[[nodiscard]] SequenceTerms sequence_terms(const Model& model, const EventSequence& seq, const LossWeights& weights,
                                           const MCConfig& mc, ForwardMode mode, std::uint64_t salt = 0);

// Sum over sequences of the per-sequence objective, accumulated in input order.
[[nodiscard]] ad::Var total_objective(const Model& model, std::span<const EventSequence> batch,
                                      const LossWeights& weights, const MCConfig& mc, ForwardMode mode,
                                      std::uint64_t salt = 0);

}  // namespace eventlm
