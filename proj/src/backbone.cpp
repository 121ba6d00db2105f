#include "eventlm/backbone.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace eventlm {

namespace {

ad::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    }
    return m;
}

ad::ParameterPtr param(const std::string& name, const std::string& family, ad::Matrix init) {
    return std::make_shared<ad::Parameter>(name, family, std::move(init));
}

ad::Var dropout(const ad::Var& x, double rate, ForwardMode mode, Rng* rng) {
    if (mode != ForwardMode::train || rate <= 0.0) {
        return x;
    }
    if (rng == nullptr) {
        throw std::invalid_argument("dropout in train mode requires an rng");
    }
    const double keep = 1.0 - rate;
    ad::Matrix mask(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
    return ad::mul_const(x, mask);
}

ad::Var project(const ad::Var& x, const ad::ParameterPtr& w, const std::optional<LoRAPair>& adapter,
                const LoRAConfig* lcfg, ForwardMode mode, Rng* rng) {
    ad::Var y = ad::linear(x, w->var());
    if (adapter && lcfg != nullptr) {
        ad::Var xd = dropout(x, lcfg->dropout, mode, rng);
        ad::Var delta = ad::linear(ad::linear(xd, adapter->a->var()), adapter->b->var());
        y = ad::add(y, ad::scale(delta, lcfg->scaling()));
    }
    return y;
}

void check_finite(const ad::Var& v, std::size_t layer) {
    if (!v.value().allFinite()) {
        throw NumericalError("non-finite activation in backbone layer " + std::to_string(layer));
    }
}

ad::Matrix stream_positions(Eigen::Index len, int dim) {
    ad::Matrix pe(len, dim);
    for (Eigen::Index p = 0; p < len; ++p) pe.row(p) = temporal_positional_encoding(static_cast<double>(p), dim);
    return pe;
}

}  // namespace

void BackboneConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || model_dim < 2 || ffn_dim < 1 || max_seq_len < 1) {
        throw std::invalid_argument("backbone config: sizes must be positive");
    }
    if (model_dim % num_heads != 0) {
        throw std::invalid_argument("backbone config: model_dim must be divisible by num_heads");
    }
    if (model_dim % 2 != 0) {
        throw std::invalid_argument("backbone config: model_dim must be even");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw std::invalid_argument("backbone config: dropout_rate must be in [0, 1)");
    }
}

std::vector<ad::ParameterPtr> BackboneParams::parameters() const {
    std::vector<ad::ParameterPtr> out{token_embedding};
    for (const auto& l : layers) {
        for (const auto& p : {l.ln1_gain, l.ln1_bias, l.w_q, l.w_k, l.w_v, l.w_o, l.ln2_gain, l.ln2_bias, l.ffn_w1,
                              l.ffn_b1, l.ffn_w2, l.ffn_b2}) {
            out.push_back(p);
        }
    }
    out.push_back(final_gain);
    out.push_back(final_bias);
    return out;
}

BackboneParams init_backbone(const BackboneConfig& cfg, int vocab_size, Rng& rng) {
    cfg.validate();
    const int d = cfg.model_dim;
    const int f = cfg.ffn_dim;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sf = 1.0 / std::sqrt(static_cast<double>(f));
    // Residual output projections start smaller so early training stays near
    // the embedding stream.
    const double out_scale = 1.0 / std::sqrt(2.0 * cfg.num_layers);
    BackboneParams p;
    p.token_embedding = param("embed.tokens", "token_embedding", normal_matrix(vocab_size, d, 1.0, rng));
    for (int i = 0; i < cfg.num_layers; ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        LayerParams l;
        l.ln1_gain = param(pre + "ln1.gain", "norm", ad::Matrix::Ones(1, d));
        l.ln1_bias = param(pre + "ln1.bias", "norm", ad::Matrix::Zero(1, d));
        l.w_q = param(pre + "attn.q", "attention", normal_matrix(d, d, sd, rng));
        l.w_k = param(pre + "attn.k", "attention", normal_matrix(d, d, sd, rng));
        l.w_v = param(pre + "attn.v", "attention", normal_matrix(d, d, sd, rng));
        l.w_o = param(pre + "attn.o", "attention", normal_matrix(d, d, sd * out_scale, rng));
        l.ln2_gain = param(pre + "ln2.gain", "norm", ad::Matrix::Ones(1, d));
        l.ln2_bias = param(pre + "ln2.bias", "norm", ad::Matrix::Zero(1, d));
        l.ffn_w1 = param(pre + "ffn.w1", "ffn", normal_matrix(f, d, sd, rng));
        l.ffn_b1 = param(pre + "ffn.b1", "ffn", ad::Matrix::Zero(1, f));
        l.ffn_w2 = param(pre + "ffn.w2", "ffn", normal_matrix(d, f, sf * out_scale, rng));
        l.ffn_b2 = param(pre + "ffn.b2", "ffn", ad::Matrix::Zero(1, d));
        p.layers.push_back(std::move(l));
    }
    p.final_gain = param("final.gain", "norm", ad::Matrix::Ones(1, d));
    p.final_bias = param("final.bias", "norm", ad::Matrix::Zero(1, d));
    return p;
}

std::string to_string(LoRATarget t) {
    switch (t) {
        case LoRATarget::q: return "Q";
        case LoRATarget::k: return "K";
        case LoRATarget::v: return "V";
        case LoRATarget::o: return "O";
    }
    return "?";
}

std::set<LoRATarget> parse_lora_targets(const std::string& s) {
    std::set<LoRATarget> out;
    for (char c : s) {
        switch (std::toupper(static_cast<unsigned char>(c))) {
            case 'Q': out.insert(LoRATarget::q); break;
            case 'K': out.insert(LoRATarget::k); break;
            case 'V': out.insert(LoRATarget::v); break;
            case 'O': out.insert(LoRATarget::o); break;
            case ',':
            case ' ': break;
            default: throw std::invalid_argument("unknown LoRA target '" + std::string(1, c) + "' (use Q,K,V,O)");
        }
    }
    if (out.empty()) throw std::invalid_argument("LoRA targets must not be empty");
    return out;
}

std::string lora_targets_string(const std::set<LoRATarget>& targets) {
    std::string s;
    for (auto t : targets) s += to_string(t);
    return s;
}

std::vector<ad::ParameterPtr> LoRAParams::parameters() const {
    std::vector<ad::ParameterPtr> out;
    for (const auto& layer : adapters) {
        for (const auto& a : layer) {
            if (a) {
                out.push_back(a->a);
                out.push_back(a->b);
            }
        }
    }
    return out;
}

std::size_t LoRAParams::trainable_count() const { return count_parameters(parameters()); }

LoRAParams attach_lora(const BackboneParams& params, const BackboneConfig& bcfg, const LoRAConfig& cfg,
                       std::uint64_t seed) {
    const int d = bcfg.model_dim;
    if (cfg.rank < 1 || cfg.rank > d) {
        throw std::invalid_argument("LoRA rank must be in [1, model_dim]");
    }
    if (cfg.targets.empty()) {
        throw std::invalid_argument("LoRA needs at least one target");
    }
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
        throw std::invalid_argument("LoRA dropout must be in [0, 1)");
    }
    Rng rng(derive_seed(seed, "lora"));
    LoRAParams lora;
    lora.config = cfg;
    lora.adapters.resize(params.layers.size());
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        for (auto t : {LoRATarget::q, LoRATarget::k, LoRATarget::v, LoRATarget::o}) {
            if (!cfg.targets.count(t)) continue;
            const std::string pre = "lora.layer" + std::to_string(i) + "." + to_string(t) + ".";
            LoRAPair pair;
            pair.a = param(pre + "A", "lora", normal_matrix(cfg.rank, d, sd, rng));
            pair.b = param(pre + "B", "lora", ad::Matrix::Zero(d, cfg.rank));
            lora.adapters[i][static_cast<std::size_t>(t)] = std::move(pair);
        }
    }
    return lora;
}

BackboneParams merge_lora(const BackboneParams& params, const LoRAParams& lora) {
    auto clone = [](const ad::ParameterPtr& p) { return param(p->name(), p->family(), p->value()); };
    BackboneParams out;
    out.token_embedding = clone(params.token_embedding);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const LayerParams& l = params.layers[i];
        LayerParams m{clone(l.ln1_gain), clone(l.ln1_bias), clone(l.w_q),    clone(l.w_k),
                      clone(l.w_v),      clone(l.w_o),      clone(l.ln2_gain), clone(l.ln2_bias),
                      clone(l.ffn_w1),   clone(l.ffn_b1),   clone(l.ffn_w2),   clone(l.ffn_b2)};
        const std::array<ad::ParameterPtr*, 4> targets{&m.w_q, &m.w_k, &m.w_v, &m.w_o};
        for (std::size_t t = 0; t < 4; ++t) {
            if (const auto& a = lora.adapters.at(i)[t]) {
                (*targets[t])->value() += lora.config.scaling() * a->b->value() * a->a->value();
            }
        }
        out.layers.push_back(std::move(m));
    }
    out.final_gain = clone(params.final_gain);
    out.final_bias = clone(params.final_bias);
    return out;
}

ad::Var forward(const ad::Var& stream, const BackboneParams& params, const LoRAParams* lora,
                const BackboneConfig& cfg, ForwardMode mode, Rng* rng) {
    const Eigen::Index len = stream.rows();
    const int d = cfg.model_dim;
    if (len > cfg.max_seq_len) {
        throw std::length_error("sequence length " + std::to_string(len) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
    }
    if (stream.cols() != d) {
        throw std::invalid_argument("forward: stream width does not match model_dim");
    }
    const int heads = cfg.num_heads;
    const int head_dim = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const LoRAConfig* lcfg = lora != nullptr ? &lora->config : nullptr;
    static const std::optional<LoRAPair> kNone;
    auto adapter = [&](std::size_t layer, LoRATarget t) -> const std::optional<LoRAPair>& {
        return lora != nullptr ? lora->at(layer, t) : kNone;
    };

    ad::Var x = ad::add(stream, ad::constant(stream_positions(len, d)));
    x = dropout(x, cfg.dropout_rate, mode, rng);
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const LayerParams& l = params.layers[li];
        ad::Var h = ad::layer_norm(x, l.ln1_gain->var(), l.ln1_bias->var());
        ad::Var q = project(h, l.w_q, adapter(li, LoRATarget::q), lcfg, mode, rng);
        ad::Var k = project(h, l.w_k, adapter(li, LoRATarget::k), lcfg, mode, rng);
        ad::Var v = project(h, l.w_v, adapter(li, LoRATarget::v), lcfg, mode, rng);
        std::vector<ad::Var> head_out;
        head_out.reserve(static_cast<std::size_t>(heads));
        for (int hd = 0; hd < heads; ++hd) {
            ad::Var qh = ad::slice_cols(q, hd * head_dim, head_dim);
            ad::Var kh = ad::slice_cols(k, hd * head_dim, head_dim);
            ad::Var vh = ad::slice_cols(v, hd * head_dim, head_dim);
            ad::Var probs = ad::causal_softmax(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
            head_out.push_back(ad::matmul(probs, vh));
        }
        ad::Var attn = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
        attn = project(attn, l.w_o, adapter(li, LoRATarget::o), lcfg, mode, rng);
        x = ad::add(x, dropout(attn, cfg.dropout_rate, mode, rng));

        ad::Var f = ad::layer_norm(x, l.ln2_gain->var(), l.ln2_bias->var());
        f = ad::gelu(ad::add_row(ad::linear(f, l.ffn_w1->var()), l.ffn_b1->var()));
        f = ad::add_row(ad::linear(f, l.ffn_w2->var()), l.ffn_b2->var());
        x = ad::add(x, dropout(f, cfg.dropout_rate, mode, rng));
        check_finite(x, li);
    }
    return ad::layer_norm(x, params.final_gain->var(), params.final_bias->var());
}

ad::Matrix forward(const AssembledSequence& assembled, const BackboneParams& params, const LoRAParams* lora,
                   const BackboneConfig& cfg) {
    return forward(ad::constant(assembled.embeddings), params, lora, cfg, ForwardMode::infer).value();
}

ad::Var extract_history_vectors(const ad::Var& hidden, const std::vector<int>& boundaries) {
    return ad::gather_rows(hidden, boundaries);
}

std::size_t count_parameters(const std::vector<ad::ParameterPtr>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p->size());
    return n;
}

}  // namespace eventlm
