#pragma once

#include "eventlm/autodiff.hpp"
#include "eventlm/core.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace eventlm {

class Rng;

enum class EventOrder { type_first, time_first };
enum class TypeFormat { textual, ordinal };
enum class TemporalVariant { sinusoidal, time_shifted, linear };

[[nodiscard]] std::string to_string(EventOrder v);
[[nodiscard]] std::string to_string(TypeFormat v);
[[nodiscard]] std::string to_string(TemporalVariant v);
[[nodiscard]] EventOrder parse_event_order(const std::string& s);
[[nodiscard]] TypeFormat parse_type_format(const std::string& s);
[[nodiscard]] TemporalVariant parse_temporal_variant(const std::string& s);

// Word-level vocabulary. Ids 0 and 1 are reserved for padding and unknown words.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocab();
    explicit Vocab(const std::vector<std::string>& tokens_after_reserved);

    // Returns the id of `word`, inserting it if new.
    int add(const std::string& word);
    [[nodiscard]] int id_of(const std::string& word) const;
    [[nodiscard]] const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
    [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct TokenizedEvent {
    std::vector<int> token_ids;
    [[nodiscard]] int length() const { return static_cast<int>(token_ids.size()); }
};

struct PromptSpec {
    bool enabled{true};
    std::string text;
    EventOrder order{EventOrder::type_first};
    TypeFormat type_format{TypeFormat::textual};
};

// Learnable parameters exist only for the variants that use them:
// linear has weight and bias (1 x D each), time_shifted has scale (1 x D).
struct TemporalEncodingSpec {
    TemporalVariant variant{TemporalVariant::sinusoidal};
    int dim{0};
    ad::ParameterPtr weight;
    ad::ParameterPtr bias;
    ad::ParameterPtr scale;

    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const;
};

[[nodiscard]] TemporalEncodingSpec make_temporal_spec(TemporalVariant variant, int dim, Rng& rng);

struct AssembledSequence {
    ad::Matrix embeddings;
    std::vector<int> event_last_index;
    int total_len{0};
};

// Slot-level description of the flattened stream; independent of any weights.
struct StreamLayout {
    struct Slot {
        bool is_time{false};
        int value{0};  // token id, or event index for a time slot
    };
    std::vector<Slot> slots;
    std::vector<int> event_last_index;
    int prompt_len{0};

    [[nodiscard]] int total_len() const { return static_cast<int>(slots.size()); }
};

// Lowercased whitespace-separated words.
[[nodiscard]] std::vector<std::string> split_words(const std::string& text);

// The text an event type contributes to the stream under `format`.
[[nodiscard]] std::string type_surface(const EventType& type, TypeFormat format);

[[nodiscard]] Vocab build_vocab(const Dataset& ds, const PromptSpec& prompt);
[[nodiscard]] TokenizedEvent tokenize_event_type(const std::string& text, const Vocab& vocab);
// One entry per type id.
[[nodiscard]] std::vector<TokenizedEvent> tokenize_types(const Dataset& ds, TypeFormat format, const Vocab& vocab);

// Sinusoidal time encoding; component j (1-based) is cos(t / 10000^((j-1)/D))
// for odd j and sin(t / 10000^(j/D)) for even j.
[[nodiscard]] ad::Vector temporal_positional_encoding(double t, int dim);
// Same sinusoid evaluated per component at position + s_j * t.
[[nodiscard]] ad::Vector time_shifted_encoding(int position, double t, const TemporalEncodingSpec& spec);
[[nodiscard]] ad::Vector linear_time_embedding(double t, const TemporalEncodingSpec& spec);
// Row i holds the encoding of times[i] (event index i is the position for time_shifted).
[[nodiscard]] ad::Var temporal_embeddings(const std::vector<double>& times, const TemporalEncodingSpec& spec);

[[nodiscard]] StreamLayout layout_stream(const std::vector<int>& prompt_tokens,
                                         const std::vector<TokenizedEvent>& per_event, EventOrder order);

// Differentiable stream construction: rows follow `layout`, token slots read
// from `token_table` and time slots from temporal_embeddings(times, spec).
[[nodiscard]] ad::Var embed_stream(const StreamLayout& layout, const std::vector<double>& times,
                                   const TemporalEncodingSpec& spec, const ad::Var& token_table);

// `type_tokens[k]` holds the tokens of type k.
[[nodiscard]] AssembledSequence assemble_sequence(const EventSequence& seq,
                                                  const std::vector<TokenizedEvent>& type_tokens,
                                                  const PromptSpec& prompt, const Vocab& vocab,
                                                  const TemporalEncodingSpec& spec,
                                                  const ad::Matrix& token_embeddings, int max_len);

// Prompt templates keyed by dataset name. Each entry has a sequence
// description and an event description for each ordering.
class PromptTemplates {
public:
    struct Entry {
        std::string sequence;
        std::string type_first;
        std::string time_first;
    };

    // Built-in templates for the reference datasets and a generic fallback.
    static PromptTemplates defaults();
    // Plain-text format: "[key]" headers followed by "field = value" lines
    // (fields: sequence, type_first, time_first); '#' starts a comment line.
    static PromptTemplates load(const std::filesystem::path& path);
    static PromptTemplates parse(const std::string& text);

    void set(const std::string& key, Entry entry);
    [[nodiscard]] const Entry& lookup(const std::string& dataset_name) const;
    // "{sequence} {event description} {task description}"
    [[nodiscard]] std::string compose(const std::string& dataset_name, EventOrder order) const;
    [[nodiscard]] std::string serialize() const;

private:
    std::map<std::string, Entry> entries_;
};

[[nodiscard]] std::string task_description(EventOrder order);

}  // namespace eventlm
