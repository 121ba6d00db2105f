#include "eventlm/checkpoint.hpp"

#include "eventlm/errors.hpp"

#include <fstream>
#include <map>

namespace eventlm {

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    const auto& b = cfg.backbone;
    return {{"backbone",
             {{"num_layers", b.num_layers},
              {"num_heads", b.num_heads},
              {"model_dim", b.model_dim},
              {"ffn_dim", b.ffn_dim},
              {"max_seq_len", b.max_seq_len},
              {"dropout_rate", b.dropout_rate}}},
            {"temporal", to_string(cfg.temporal)},
            {"intensity", to_string(cfg.intensity)},
            {"prompt",
             {{"enabled", cfg.prompt.enabled},
              {"text", cfg.prompt.text},
              {"order", to_string(cfg.prompt.order)},
              {"type_format", to_string(cfg.prompt.type_format)}}},
            {"time_target", to_string(cfg.time_target)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    const auto& b = j.at("backbone");
    cfg.backbone.num_layers = b.at("num_layers").get<int>();
    cfg.backbone.num_heads = b.at("num_heads").get<int>();
    cfg.backbone.model_dim = b.at("model_dim").get<int>();
    cfg.backbone.ffn_dim = b.at("ffn_dim").get<int>();
    cfg.backbone.max_seq_len = b.at("max_seq_len").get<int>();
    cfg.backbone.dropout_rate = b.at("dropout_rate").get<double>();
    cfg.temporal = parse_temporal_variant(j.at("temporal").get<std::string>());
    cfg.intensity = parse_intensity_kind(j.at("intensity").get<std::string>());
    const auto& p = j.at("prompt");
    cfg.prompt.enabled = p.at("enabled").get<bool>();
    cfg.prompt.text = p.at("text").get<std::string>();
    cfg.prompt.order = parse_event_order(p.at("order").get<std::string>());
    cfg.prompt.type_format = parse_type_format(p.at("type_format").get<std::string>());
    cfg.time_target = parse_time_target(j.at("time_target").get<std::string>());
    return cfg;
}

nlohmann::json checkpoint_to_json(const Model& model) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : model.all_parameters()) {
        const auto& v = p->value();
        params[p->name()] = {{"rows", v.rows()},
                             {"cols", v.cols()},
                             {"data", std::vector<double>(v.data(), v.data() + v.size())}};
    }
    nlohmann::json types = nlohmann::json::array();
    for (const auto& t : model.types) types.push_back({{"id", t.id}, {"text", t.text}});
    nlohmann::json lora = nullptr;
    if (model.lora) {
        const auto& c = model.lora->config;
        lora = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout},
                {"targets", lora_targets_string(c.targets)}};
    }
    std::vector<std::string> vocab(model.vocab.tokens().begin() + 2, model.vocab.tokens().end());
    return {{"format", kCheckpointFormat}, {"model_config", model_config_to_json(model.config)},
            {"vocab", vocab},           {"event_types", types},
            {"lora", lora},             {"parameters", params}};
}

Model checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kCheckpointFormat) {
            throw DataError("not an eventlm checkpoint (expected format " + std::string(kCheckpointFormat) + ")");
        }
        std::vector<EventType> types;
        for (const auto& t : j.at("event_types")) types.push_back({t.at("id").get<int>(), t.at("text").get<std::string>()});
        Model model = create_model(model_config_from_json(j.at("model_config")),
                                   Vocab(j.at("vocab").get<std::vector<std::string>>()), std::move(types), 1.0, 0);
        if (!j.at("lora").is_null()) {
            const auto& l = j.at("lora");
            LoRAConfig c;
            c.rank = l.at("rank").get<int>();
            c.alpha = l.at("alpha").get<double>();
            c.dropout = l.at("dropout").get<double>();
            c.targets = parse_lora_targets(l.at("targets").get<std::string>());
            model.attach_adapters(c, 0);
        }
        const auto& params = j.at("parameters");
        for (const auto& p : model.all_parameters()) {
            if (!params.contains(p->name())) throw DataError("checkpoint missing parameter " + p->name());
            const auto& e = params.at(p->name());
            const auto rows = e.at("rows").get<Eigen::Index>();
            const auto cols = e.at("cols").get<Eigen::Index>();
            const auto data = e.at("data").get<std::vector<double>>();
            if (rows != p->value().rows() || cols != p->value().cols() ||
                static_cast<Eigen::Index>(data.size()) != rows * cols) {
                throw DataError("checkpoint parameter " + p->name() + " has the wrong shape");
            }
            p->value() = Eigen::Map<const ad::Matrix>(data.data(), rows, cols);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(model).dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace eventlm
