#include "eventlm/model.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace eventlm {

std::string to_string(TrainableScope s) {
    switch (s) {
        case TrainableScope::all: return "all";
        case TrainableScope::lora_and_heads: return "lora_and_heads";
        case TrainableScope::heads_only: return "heads_only";
    }
    return "all";
}

TrainableScope parse_trainable_scope(const std::string& s) {
    if (s == "all") return TrainableScope::all;
    if (s == "lora_and_heads") return TrainableScope::lora_and_heads;
    if (s == "heads_only") return TrainableScope::heads_only;
    throw std::invalid_argument("unknown trainable scope '" + s + "' (all|lora_and_heads|heads_only)");
}

StreamLayout Model::layout(const EventSequence& seq) const {
    std::vector<TokenizedEvent> per_event;
    per_event.reserve(seq.events.size());
    for (const auto& e : seq.events) {
        if (e.type_id < 0 || e.type_id >= num_types()) {
            throw DataError("sequence " + seq.id + ": type id " + std::to_string(e.type_id) + " out of range");
        }
        per_event.push_back(type_tokens[static_cast<std::size_t>(e.type_id)]);
    }
    return layout_stream(prompt_tokens, per_event, config.prompt.order);
}

std::vector<ad::ParameterPtr> Model::base_parameters() const {
    auto out = backbone.parameters();
    for (const auto& p : temporal.parameters()) out.push_back(p);
    return out;
}

std::vector<ad::ParameterPtr> Model::head_parameters() const {
    auto out = intensity.parameters();
    for (const auto& p : type_head.parameters()) out.push_back(p);
    for (const auto& p : time_head.parameters()) out.push_back(p);
    return out;
}

std::vector<ad::ParameterPtr> Model::lora_parameters() const {
    return lora ? lora->parameters() : std::vector<ad::ParameterPtr>{};
}

std::vector<ad::ParameterPtr> Model::all_parameters() const {
    auto out = base_parameters();
    for (const auto& p : lora_parameters()) out.push_back(p);
    for (const auto& p : head_parameters()) out.push_back(p);
    return out;
}

std::vector<ad::ParameterPtr> Model::trainable_parameters() const {
    std::vector<ad::ParameterPtr> out;
    for (const auto& p : all_parameters()) {
        if (p->trainable()) out.push_back(p);
    }
    return out;
}

void Model::set_scope(TrainableScope scope) {
    for (const auto& p : base_parameters()) p->set_trainable(scope == TrainableScope::all);
    for (const auto& p : lora_parameters()) {
        p->set_trainable(scope == TrainableScope::all || scope == TrainableScope::lora_and_heads);
    }
    for (const auto& p : head_parameters()) p->set_trainable(true);
}

void Model::attach_adapters(const LoRAConfig& cfg, std::uint64_t seed) {
    lora = attach_lora(backbone, config.backbone, cfg, seed);
}

void Model::zero_grad() const {
    for (const auto& p : all_parameters()) p->zero_grad();
}

Model create_model(const ModelConfig& cfg, Vocab vocab, std::vector<EventType> types, double initial_gap,
                   std::uint64_t seed) {
    cfg.backbone.validate();
    if (types.empty()) {
        throw std::invalid_argument("model needs at least one event type");
    }
    if (cfg.prompt.enabled && cfg.prompt.text.empty()) {
        throw std::invalid_argument("prompt enabled but prompt text is empty");
    }
    Rng rng(derive_seed(seed, "model"));
    Model m;
    m.config = cfg;
    m.vocab = std::move(vocab);
    m.types = std::move(types);
    for (const auto& t : m.types) {
        m.type_tokens.push_back(tokenize_event_type(type_surface(t, cfg.prompt.type_format), m.vocab));
    }
    if (cfg.prompt.enabled) {
        for (const auto& w : split_words(cfg.prompt.text)) m.prompt_tokens.push_back(m.vocab.id_of(w));
    }
    const int d = cfg.backbone.model_dim;
    m.backbone = init_backbone(cfg.backbone, m.vocab.size(), rng);
    m.temporal = make_temporal_spec(cfg.temporal, d, rng);
    m.intensity = init_intensity_head(cfg.intensity, m.num_types(), d, rng);
    m.type_head = init_type_head(m.num_types(), d, rng);
    m.time_head = init_time_head(d, initial_gap, rng);
    return m;
}

Model build_model(const Dataset& ds, const ModelConfig& cfg, std::uint64_t seed) {
    double gap_sum = 0.0;
    std::size_t gaps = 0;
    for (const auto& s : ds.sequences) {
        for (std::size_t i = 1; i < s.events.size(); ++i) {
            gap_sum += s.events[i].time - s.events[i - 1].time;
            ++gaps;
        }
    }
    const double initial_gap = gaps > 0 ? gap_sum / static_cast<double>(gaps) : 1.0;
    return create_model(cfg, build_vocab(ds, cfg.prompt), ds.types, initial_gap, seed);
}

ad::Var history_graph(const Model& model, const EventSequence& seq, ForwardMode mode, Rng* rng) {
    const StreamLayout layout = model.layout(seq);
    std::vector<double> times;
    times.reserve(seq.events.size());
    for (const auto& e : seq.events) times.push_back(e.time);
    ad::Var stream = embed_stream(layout, times, model.temporal, model.backbone.token_embedding->var());
    ad::Var hidden = forward(stream, model.backbone, model.lora ? &*model.lora : nullptr, model.config.backbone, mode,
                             rng);
    return extract_history_vectors(hidden, layout.event_last_index);
}

ad::Matrix history_vectors(const Model& model, const EventSequence& seq) {
    return history_graph(model, seq, ForwardMode::infer).value();
}

SequenceTerms sequence_terms(const Model& model, const EventSequence& seq, const LossWeights& weights,
                             const MCConfig& mc, ForwardMode mode, std::uint64_t salt) {
    const std::size_t n = seq.events.size();
    if (n < 2) {
        throw DataError("sequence " + seq.id + " has fewer than 2 events");
    }
    Rng dropout_rng(derive_seed(mc.seed, seq.id, salt ^ 0xD20F0ULL));
    ad::Var hist = history_graph(model, seq, mode, &dropout_rng);

    std::vector<double> times;
    std::vector<int> next_types;
    times.reserve(n);
    for (const auto& e : seq.events) times.push_back(e.time);
    for (std::size_t i = 1; i < n; ++i) next_types.push_back(seq.events[i].type_id);

    Rng mc_rng(sequence_stream_seed(mc, seq.id, salt));
    const auto samples = draw_mc_samples(times, mc, mc_rng);

    std::vector<int> prefix(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) prefix[i] = static_cast<int>(i);
    ad::Var hist_prefix = ad::gather_rows(hist, prefix);

    SequenceTerms t;
    t.log_likelihood = sequence_log_likelihood_graph(seq, hist, model.intensity, samples);
    t.type_loss = type_loss_graph(hist_prefix, next_types, model.type_head);
    t.time_loss = time_loss_graph(hist_prefix, times, model.time_head, model.config.time_target);
    t.objective = ad::add(ad::add(ad::scale(t.log_likelihood, -1.0), ad::scale(t.type_loss, weights.beta_type)),
                          ad::scale(t.time_loss, weights.beta_time));
    return t;
}

ad::Var total_objective(const Model& model, std::span<const EventSequence> batch, const LossWeights& weights,
                        const MCConfig& mc, ForwardMode mode, std::uint64_t salt) {
    if (batch.empty()) {
        throw std::invalid_argument("total_objective: empty batch");
    }
    ad::Var total;
    for (const auto& seq : batch) {
        SequenceTerms t = sequence_terms(model, seq, weights, mc, mode, salt);
        if (!std::isfinite(t.objective.scalar())) {
            throw NumericalError("non-finite objective for sequence " + seq.id);
        }
        total = total.valid() ? ad::add(total, t.objective) : t.objective;
    }
    return total;
}

}  // namespace eventlm
