#include "eventlm/encode.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eventlm {

namespace {

// Divisor 10000^(e/D) for 1-based component j: e = j-1 for odd j, j for even j.
double component_divisor(int j, int dim) {
    const int e = (j % 2 == 1) ? j - 1 : j;
    return std::pow(10000.0, static_cast<double>(e) / static_cast<double>(dim));
}

double sinusoid(int j, double phase) { return (j % 2 == 1) ? std::cos(phase) : std::sin(phase); }
double sinusoid_derivative(int j, double phase) { return (j % 2 == 1) ? -std::sin(phase) : std::cos(phase); }

std::string normalize_key(const std::string& name) {
    std::string out;
    for (unsigned char c : name) {
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

ad::Matrix normal_row(int dim, double stddev, Rng& rng) {
    ad::Matrix m(1, dim);
    for (int j = 0; j < dim; ++j) m(0, j) = stddev * rng.normal();
    return m;
}

}  // namespace

std::string to_string(EventOrder v) { return v == EventOrder::type_first ? "type_first" : "time_first"; }
std::string to_string(TypeFormat v) { return v == TypeFormat::textual ? "textual" : "ordinal"; }
std::string to_string(TemporalVariant v) {
    switch (v) {
        case TemporalVariant::sinusoidal: return "sinusoidal";
        case TemporalVariant::time_shifted: return "time_shifted";
        case TemporalVariant::linear: return "linear";
    }
    return "sinusoidal";
}

EventOrder parse_event_order(const std::string& s) {
    if (s == "type_first") return EventOrder::type_first;
    if (s == "time_first") return EventOrder::time_first;
    throw std::invalid_argument("unknown event order '" + s + "' (type_first|time_first)");
}

TypeFormat parse_type_format(const std::string& s) {
    if (s == "textual") return TypeFormat::textual;
    if (s == "ordinal") return TypeFormat::ordinal;
    throw std::invalid_argument("unknown type format '" + s + "' (textual|ordinal)");
}

TemporalVariant parse_temporal_variant(const std::string& s) {
    if (s == "sinusoidal") return TemporalVariant::sinusoidal;
    if (s == "time_shifted") return TemporalVariant::time_shifted;
    if (s == "linear") return TemporalVariant::linear;
    throw std::invalid_argument("unknown temporal encoding '" + s + "' (sinusoidal|time_shifted|linear)");
}

Vocab::Vocab() : tokens_{"<pad>", "<unk>"} {
    ids_[tokens_[0]] = kPad;
    ids_[tokens_[1]] = kUnk;
}

Vocab::Vocab(const std::vector<std::string>& tokens_after_reserved) : Vocab() {
    for (const auto& t : tokens_after_reserved) add(t);
}

int Vocab::add(const std::string& word) {
    auto [it, inserted] = ids_.emplace(word, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(word);
    return it->second;
}

int Vocab::id_of(const std::string& word) const {
    const auto it = ids_.find(word);
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<ad::ParameterPtr> TemporalEncodingSpec::parameters() const {
    std::vector<ad::ParameterPtr> out;
    for (const auto& p : {weight, bias, scale}) {
        if (p) out.push_back(p);
    }
    return out;
}

TemporalEncodingSpec make_temporal_spec(TemporalVariant variant, int dim, Rng& rng) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("temporal encoding dimension must be even and >= 2");
    }
    TemporalEncodingSpec spec;
    spec.variant = variant;
    spec.dim = dim;
    if (variant == TemporalVariant::linear) {
        spec.weight = std::make_shared<ad::Parameter>("temporal.weight", "temporal", normal_row(dim, 0.5, rng));
        spec.bias = std::make_shared<ad::Parameter>("temporal.bias", "temporal", normal_row(dim, 0.5, rng));
    } else if (variant == TemporalVariant::time_shifted) {
        spec.scale = std::make_shared<ad::Parameter>("temporal.scale", "temporal", ad::Matrix::Ones(1, dim));
    }
    return spec;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(w));
    }
    return out;
}

std::string type_surface(const EventType& type, TypeFormat format) {
    return format == TypeFormat::ordinal ? std::to_string(type.id) : type.text;
}

Vocab build_vocab(const Dataset& ds, const PromptSpec& prompt) {
    Vocab v;
    for (const auto& t : ds.types) {
        for (const auto& w : split_words(type_surface(t, prompt.type_format))) v.add(w);
    }
    if (prompt.enabled) {
        for (const auto& w : split_words(prompt.text)) v.add(w);
    }
    return v;
}

TokenizedEvent tokenize_event_type(const std::string& text, const Vocab& vocab) {
    TokenizedEvent out;
    for (const auto& w : split_words(text)) out.token_ids.push_back(vocab.id_of(w));
    if (out.token_ids.empty()) {
        throw DataError("event type text \"" + text + "\" has no tokens");
    }
    return out;
}

std::vector<TokenizedEvent> tokenize_types(const Dataset& ds, TypeFormat format, const Vocab& vocab) {
    std::vector<TokenizedEvent> out;
    out.reserve(ds.types.size());
    for (const auto& t : ds.types) out.push_back(tokenize_event_type(type_surface(t, format), vocab));
    return out;
}

ad::Vector temporal_positional_encoding(double t, int dim) {
    if (dim % 2 != 0) {
        throw std::invalid_argument("temporal_positional_encoding: dimension must be even");
    }
    ad::Vector out(dim);
    for (int j = 1; j <= dim; ++j) out(j - 1) = sinusoid(j, t / component_divisor(j, dim));
    return out;
}

ad::Vector time_shifted_encoding(int position, double t, const TemporalEncodingSpec& spec) {
    if (spec.variant != TemporalVariant::time_shifted || !spec.scale) {
        throw std::invalid_argument("time_shifted_encoding: spec is not time_shifted");
    }
    ad::Vector out(spec.dim);
    const auto& s = spec.scale->value();
    for (int j = 1; j <= spec.dim; ++j) {
        const double arg = static_cast<double>(position) + s(0, j - 1) * t;
        out(j - 1) = sinusoid(j, arg / component_divisor(j, spec.dim));
    }
    return out;
}

ad::Vector linear_time_embedding(double t, const TemporalEncodingSpec& spec) {
    if (spec.variant != TemporalVariant::linear || !spec.weight || !spec.bias) {
        throw std::invalid_argument("linear_time_embedding: spec is not linear");
    }
    return (spec.weight->value().row(0) * t + spec.bias->value().row(0)).transpose();
}

ad::Var temporal_embeddings(const std::vector<double>& times, const TemporalEncodingSpec& spec) {
    const auto n = static_cast<Eigen::Index>(times.size());
    const int dim = spec.dim;
    switch (spec.variant) {
        case TemporalVariant::sinusoidal: {
            ad::Matrix m(n, dim);
            for (Eigen::Index i = 0; i < n; ++i) m.row(i) = temporal_positional_encoding(times[i], dim).transpose();
            return ad::constant(std::move(m));
        }
        case TemporalVariant::linear: {
            ad::Vector tv = Eigen::Map<const ad::Vector>(times.data(), n);
            ad::Var ones = ad::constant(ad::Matrix::Ones(n, 1));
            ad::Var tcol = ad::constant(tv);
            return ad::add(ad::matmul(tcol, spec.weight->var()), ad::matmul(ones, spec.bias->var()));
        }
        case TemporalVariant::time_shifted: {
            ad::Matrix m(n, dim);
            ad::Matrix dphase(n, dim);  // d out / d s_j
            const auto& s = spec.scale->value();
            for (Eigen::Index i = 0; i < n; ++i) {
                for (int j = 1; j <= dim; ++j) {
                    const double div = component_divisor(j, dim);
                    const double phase = (static_cast<double>(i) + s(0, j - 1) * times[i]) / div;
                    m(i, j - 1) = sinusoid(j, phase);
                    dphase(i, j - 1) = sinusoid_derivative(j, phase) * times[i] / div;
                }
            }
            return ad::make_node(std::move(m), {spec.scale->var()}, [dphase](ad::Node& node) {
                node.inputs[0]->grad_buffer() += node.grad.cwiseProduct(dphase).colwise().sum();
            });
        }
    }
    throw std::logic_error("unreachable temporal variant");
}

StreamLayout layout_stream(const std::vector<int>& prompt_tokens, const std::vector<TokenizedEvent>& per_event,
                           EventOrder order) {
    StreamLayout layout;
    layout.prompt_len = static_cast<int>(prompt_tokens.size());
    for (int id : prompt_tokens) layout.slots.push_back({false, id});
    for (std::size_t i = 0; i < per_event.size(); ++i) {
        if (per_event[i].token_ids.empty()) {
            throw std::invalid_argument("layout_stream: event " + std::to_string(i) + " has no tokens");
        }
        const StreamLayout::Slot time_slot{true, static_cast<int>(i)};
        if (order == EventOrder::time_first) layout.slots.push_back(time_slot);
        for (int id : per_event[i].token_ids) layout.slots.push_back({false, id});
        if (order == EventOrder::type_first) layout.slots.push_back(time_slot);
        layout.event_last_index.push_back(layout.total_len() - 1);
    }
    return layout;
}

ad::Var embed_stream(const StreamLayout& layout, const std::vector<double>& times, const TemporalEncodingSpec& spec,
                     const ad::Var& token_table) {
    std::vector<int> token_ids;
    std::vector<int> perm;
    perm.reserve(layout.slots.size());
    std::size_t num_tokens = 0;
    for (const auto& s : layout.slots) num_tokens += s.is_time ? 0 : 1;
    for (const auto& s : layout.slots) {
        if (s.is_time) {
            perm.push_back(static_cast<int>(num_tokens) + s.value);
        } else {
            perm.push_back(static_cast<int>(token_ids.size()));
            token_ids.push_back(s.value);
        }
    }
    std::vector<ad::Var> parts;
    if (!token_ids.empty()) parts.push_back(ad::gather_rows(token_table, token_ids));
    if (!times.empty()) parts.push_back(temporal_embeddings(times, spec));
    return ad::gather_rows(ad::concat_rows(parts), perm);
}

AssembledSequence assemble_sequence(const EventSequence& seq, const std::vector<TokenizedEvent>& type_tokens,
                                    const PromptSpec& prompt, const Vocab& vocab, const TemporalEncodingSpec& spec,
                                    const ad::Matrix& token_embeddings, int max_len) {
    if (token_embeddings.rows() != vocab.size() || token_embeddings.cols() != spec.dim) {
        throw std::invalid_argument("assemble_sequence: embedding table does not match vocab/dimension");
    }
    std::vector<TokenizedEvent> per_event;
    per_event.reserve(seq.events.size());
    for (const auto& e : seq.events) {
        if (e.type_id < 0 || e.type_id >= static_cast<int>(type_tokens.size())) {
            throw DataError("sequence " + seq.id + ": type id " + std::to_string(e.type_id) + " out of range");
        }
        per_event.push_back(type_tokens[static_cast<std::size_t>(e.type_id)]);
    }
    std::vector<int> prompt_ids;
    if (prompt.enabled) {
        for (const auto& w : split_words(prompt.text)) prompt_ids.push_back(vocab.id_of(w));
    }
    StreamLayout layout = layout_stream(prompt_ids, per_event, prompt.order);
    if (layout.total_len() > max_len) {
        throw std::length_error("assembled length " + std::to_string(layout.total_len()) +
                                " exceeds maximum sequence length " + std::to_string(max_len));
    }
    std::vector<double> times;
    times.reserve(seq.events.size());
    for (const auto& e : seq.events) times.push_back(e.time);
    AssembledSequence out;
    out.embeddings = embed_stream(layout, times, spec, ad::constant(token_embeddings)).value();
    out.event_last_index = layout.event_last_index;
    out.total_len = layout.total_len();
    return out;
}

std::string task_description(EventOrder order) {
    return order == EventOrder::type_first
               ? "Based on this sequence, predict the next event type and the corresponding time."
               : "Based on this sequence, predict the next event time and the corresponding type.";
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.set("stackoverflow",
          {"You are given a sequence of badge awards earned by a user on the Stack Overflow platform.",
           "Each event in the sequence lists the badge name followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the badge name."});
    t.set("chicagocrime",
          {"You are given a sequence of reported crime incidents that occurred in the City of Chicago.",
           "Each event in the sequence lists the crime type followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the crime type."});
    t.set("nyctaxi",
          {"You are given a sequence of taxi trips taken in New York City.",
           "Each event in the sequence lists the pick-up or drop-off location followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the pick-up or drop-off location."});
    t.set("earthquake",
          {"You are given a sequence of earthquake events recorded in the United States.",
           "Each event in the sequence lists the magnitude classification (large or small) followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the magnitude classification (large or small)."});
    t.set("amazon",
          {"You are given a sequence of product category reviews written by a user on the Amazon platform.",
           "Each event in the sequence lists the product category followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the product category."});
    t.set("synthetic",
          {"You are given a sequence of simulated events.",
           "Each event in the sequence lists the event type followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the event type."});
    t.set("generic",
          {"You are given a sequence of events.",
           "Each event in the sequence lists the event type followed by the timestamp.",
           "Each event in the sequence lists the timestamp followed by the event type."});
    return t;
}

PromptTemplates PromptTemplates::parse(const std::string& text) {
    PromptTemplates t = defaults();
    std::istringstream in(text);
    std::string line;
    std::string key;
    Entry current;
    int line_no = 0;
    auto flush = [&] {
        if (!key.empty()) t.set(key, current);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw DataError("prompt templates line " + std::to_string(line_no) + ": bad header");
            flush();
            key = normalize_key(s.substr(1, s.size() - 2));
            current = t.entries_.count(key) ? t.entries_.at(key) : Entry{};
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos || key.empty()) {
            throw DataError("prompt templates line " + std::to_string(line_no) + ": expected field = value");
        }
        const std::string field = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (field == "sequence") current.sequence = value;
        else if (field == "type_first") current.type_first = value;
        else if (field == "time_first") current.time_first = value;
        else throw DataError("prompt templates line " + std::to_string(line_no) + ": unknown field " + field);
    }
    flush();
    return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open prompt templates " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void PromptTemplates::set(const std::string& key, Entry entry) { entries_[normalize_key(key)] = std::move(entry); }

const PromptTemplates::Entry& PromptTemplates::lookup(const std::string& dataset_name) const {
    const std::string key = normalize_key(dataset_name);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    for (const auto& [k, v] : entries_) {
        if (k != "generic" && !key.empty() && key.find(k) != std::string::npos) return v;
    }
    return entries_.at("generic");
}

std::string PromptTemplates::compose(const std::string& dataset_name, EventOrder order) const {
    const Entry& e = lookup(dataset_name);
    return e.sequence + " " + (order == EventOrder::type_first ? e.type_first : e.time_first) + " " +
           task_description(order);
}

std::string PromptTemplates::serialize() const {
    std::ostringstream out;
    for (const auto& [k, e] : entries_) {
        out << '[' << k << "]\n"
            << "sequence = " << e.sequence << '\n'
            << "type_first = " << e.type_first << '\n'
            << "time_first = " << e.time_first << "\n\n";
    }
    return out.str();
}

}  // namespace eventlm
