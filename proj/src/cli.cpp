#include "eventlm/cli.hpp"

#include "eventlm/checkpoint.hpp"
#include "eventlm/errors.hpp"
#include "eventlm/model.hpp"
#include "eventlm/rng.hpp"
#include "eventlm/synth.hpp"
#include "eventlm/train.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

namespace eventlm::cli {

using ojson = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string Settings::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Settings::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = values_.at(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::logic_error&) {
        throw UsageError(key + ": expected a number, got '" + v + "'");
    }
}

long long Settings::get_int(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const std::string v = values_.at(key);
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::logic_error&) {
        throw UsageError(key + ": expected an integer, got '" + v + "'");
    }
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = values_.at(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw UsageError(key + ": expected true/false, got '" + values_.at(key) + "'");
}

Settings parse_settings(const std::string& text, const std::vector<std::string>& allowed) {
    Settings s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        s.set(key, value);
    }
    return s;
}

Settings load_settings(const std::filesystem::path& path, const std::vector<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_settings(buf.str(), allowed);
}

std::string serialize_settings(const Settings& s) {
    std::string out;
    for (const auto& [k, v] : s.values()) out += k + " = " + v + "\n";
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

namespace {

// One subcommand's settings: each key is a long flag and a config-file key.
class Command {
public:
    // `known` collects the keys of every command, so one config file can be
    // shared between commands; keys another command owns are dropped here.
    Command(CLI::App& parent, std::set<std::string>& known, const std::string& name, const std::string& help)
        : app_(parent.add_subcommand(name, help)), known_(&known) {
        app_->add_option("--config", config_path_, "key = value settings file; flags override it");
    }

    Command& option(const std::string& key, const std::string& help, const std::string& fallback = {}) {
        auto& slot = slots_[key];
        slot.opt = app_->add_option(flag_names(key), slot.value, help);
        if (!fallback.empty()) slot.opt->default_str(fallback);
        keys_.push_back(key);
        known_->insert(key);
        return *this;
    }

    Command& flag(const std::string& key, const std::string& help) {
        auto& slot = slots_[key];
        slot.opt = app_->add_flag(flag_names(key), slot.flag, help);
        slot.is_flag = true;
        keys_.push_back(key);
        known_->insert(key);
        return *this;
    }

    [[nodiscard]] CLI::App* app() const { return app_; }

    [[nodiscard]] Settings resolve() const {
        Settings s;
        if (!config_path_.empty()) {
            const Settings file = load_settings(config_path_, {known_->begin(), known_->end()});
            for (const auto& [key, value] : file.values()) {
                if (slots_.count(key)) s.set(key, value);
            }
        }
        for (const auto& [key, slot] : slots_) {
            if (slot.opt->count() == 0) continue;
            s.set(key, slot.is_flag ? "true" : slot.value);
        }
        return s;
    }

private:
    struct Slot {
        CLI::Option* opt{nullptr};
        std::string value;
        bool flag{false};
        bool is_flag{false};
    };

    static std::string flag_names(const std::string& key) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
    }

    CLI::App* app_;
    std::set<std::string>* known_;
    std::string config_path_;
    std::map<std::string, Slot> slots_;
    std::vector<std::string> keys_;
};

std::string require(const Settings& s, const std::string& key) {
    if (!s.has(key) || s.get(key, "").empty()) throw UsageError("missing required setting --" + key);
    return s.get(key, "");
}

std::uint64_t seed_of(const Settings& s) {
    const long long v = s.get_int("seed", 0);
    if (v < 0) throw UsageError("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

int positive_int(const Settings& s, const std::string& key, long long fallback) {
    const long long v = s.get_int(key, fallback);
    if (v < 1 || v > 1'000'000'000) throw UsageError(key + " must be a positive integer");
    return static_cast<int>(v);
}

template <class F>
auto parse_enum(const std::string& key, const std::string& value, F&& parse) {
    try {
        return parse(value);
    } catch (const std::invalid_argument& e) {
        throw UsageError(key + ": " + e.what());
    }
}

Dataset load_dataset(const Settings& s) {
    Dataset ds = read_dataset(require(s, "data"));
    const auto problems = validate_dataset(ds);
    if (!problems.empty()) {
        std::string msg = "dataset violates the schema (" + std::to_string(problems.size()) + " problems):";
        for (std::size_t i = 0; i < std::min<std::size_t>(problems.size(), 5); ++i) msg += "\n  " + problems[i];
        throw DataError(msg);
    }
    if (s.get_bool("normalize", false)) ds = normalize_times(ds);
    return ds;
}

SplitRatios parse_ratios(const std::string& text) {
    std::vector<double> parts;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            parts.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw UsageError("split: expected three comma-separated ratios, got '" + text + "'");
        }
    }
    if (parts.size() != 3) throw UsageError("split: expected three comma-separated ratios, got '" + text + "'");
    return {parts[0], parts[1], parts[2]};
}

Dataset select_split(const Dataset& ds, const Settings& s, const std::string& fallback) {
    const std::string which = s.get("split_name", fallback);
    if (which == "all") return ds;
    const DatasetSplit sp = split_dataset(ds, parse_ratios(s.get("split", "0.8,0.1,0.1")), seed_of(s));
    if (which == "train") return sp.train;
    if (which == "val") return sp.val;
    if (which == "test") return sp.test;
    throw UsageError("split_name must be train, val, test or all");
}

void check_types(const Model& model, const Dataset& ds) {
    bool same = model.types.size() == ds.types.size();
    for (std::size_t i = 0; same && i < ds.types.size(); ++i) same = model.types[i].text == ds.types[i].text;
    if (!same) throw DataError("dataset event types do not match the checkpoint's type table");
}

ModelConfig model_config(const Settings& s, const std::string& dataset_name) {
    ModelConfig cfg;
    auto& b = cfg.backbone;
    b.num_layers = positive_int(s, "layers", b.num_layers);
    b.num_heads = positive_int(s, "heads", b.num_heads);
    b.model_dim = positive_int(s, "model_dim", b.model_dim);
    b.ffn_dim = positive_int(s, "ffn_dim", b.ffn_dim);
    b.max_seq_len = positive_int(s, "max_seq_len", b.max_seq_len);
    b.dropout_rate = s.get_double("dropout", b.dropout_rate);
    cfg.temporal = parse_enum("temporal", s.get("temporal", to_string(cfg.temporal)), parse_temporal_variant);
    cfg.intensity = parse_enum("intensity", s.get("intensity", to_string(cfg.intensity)), parse_intensity_kind);
    cfg.time_target = parse_enum("time_target", s.get("time_target", to_string(cfg.time_target)), parse_time_target);
    cfg.prompt.order = parse_enum("order", s.get("order", to_string(cfg.prompt.order)), parse_event_order);
    cfg.prompt.type_format =
        parse_enum("type_format", s.get("type_format", to_string(cfg.prompt.type_format)), parse_type_format);
    cfg.prompt.enabled = s.get_bool("prompt", true);
    if (cfg.prompt.enabled) {
        const PromptTemplates templates =
            s.has("prompt_file") ? PromptTemplates::load(s.get("prompt_file", "")) : PromptTemplates::defaults();
        cfg.prompt.text = templates.compose(s.get("prompt_key", dataset_name), cfg.prompt.order);
    }
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

MCConfig mc_config(const Settings& s) {
    MCConfig mc;
    mc.samples_per_interval = positive_int(s, "num_integrals", mc.samples_per_interval);
    mc.seed = seed_of(s);
    mc.stratified = s.get_bool("stratified", false);
    return mc;
}

LossWeights loss_weights(const Settings& s) {
    LossWeights w;
    w.beta_type = s.get_double("beta_type", w.beta_type);
    w.beta_time = s.get_double("beta_time", w.beta_time);
    if (w.beta_type < 0.0 || w.beta_time < 0.0) throw UsageError("beta_type and beta_time must be >= 0");
    return w;
}

LoRAConfig lora_config(const Settings& s) {
    LoRAConfig c;
    c.rank = positive_int(s, "lora_rank", c.rank);
    c.alpha = s.get_double("lora_alpha", c.alpha);
    c.dropout = s.get_double("lora_dropout", c.dropout);
    c.targets = parse_enum("target_modules", s.get("target_modules", lora_targets_string(c.targets)),
                           parse_lora_targets);
    return c;
}

TrainConfig train_config(const Settings& s) {
    TrainConfig t;
    t.learning_rate = s.get_double("learning_rate", t.learning_rate);
    t.batch_size = positive_int(s, "batch_size", t.batch_size);
    t.max_epochs = positive_int(s, "max_epoch", t.max_epochs);
    t.early_stop_patience = positive_int(s, "patience", t.early_stop_patience);
    t.train_fraction = s.get_double("train_fraction", t.train_fraction);
    t.seed = seed_of(s);
    t.weights = loss_weights(s);
    t.mc = mc_config(s);
    t.scope = parse_enum("scope", s.get("scope", to_string(t.scope)), parse_trainable_scope);
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return t;
}

ojson metrics_json(const Metrics& m, const MCConfig& mc, const Model& model) {
    ojson conventions = {
        {"log_likelihood", "sum over events 2..n of log intensity at h_{i-1}, minus the integral over (t_1, t_n)"},
        {"ll_per_event_denominator", "sum over sequences of (n - 1)"},
        {"integral", mc.stratified ? "stratified monte carlo" : "monte carlo"},
        {"num_integrals", mc.samples_per_interval},
        {"mc_seed", mc.seed},
        {"time_target", to_string(model.config.time_target)},
        {"rmse", "predicted vs actual event time for events 2..n"},
        {"accuracy", "argmax type, ties to the lowest id"}};
    return ojson{{"ll_per_event", m.ll_per_event},
                 {"accuracy", m.accuracy},
                 {"rmse", m.rmse},
                 {"num_events", m.num_events},
                 {"num_sequences", m.num_sequences},
                 {"conventions", conventions}};
}

std::unique_ptr<std::ostream> open_output(const Settings& s, std::ostream& fallback) {
    const std::string path = s.get("out", "");
    if (path.empty() || path == "-") return std::make_unique<std::ostream>(fallback.rdbuf());
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    auto f = std::make_unique<std::ofstream>(p);
    if (!*f) throw DataError("cannot write " + path);
    return f;
}

int cmd_train(const Settings& s, std::ostream& out) {
    const Dataset ds = load_dataset(s);
    const TrainConfig tcfg = train_config(s);
    const DatasetSplit sp = split_dataset(ds, parse_ratios(s.get("split", "0.8,0.1,0.1")), tcfg.seed);
    Model model = s.has("init") ? load_checkpoint(s.get("init", "")) : build_model(sp.train, model_config(s, ds.name), tcfg.seed);
    check_types(model, ds);
    if (tcfg.scope == TrainableScope::lora_and_heads && !model.lora) model.attach_adapters(lora_config(s), tcfg.seed);

    const std::filesystem::path dir = require(s, "out_dir");
    std::filesystem::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.txt");
        cfg << serialize_settings(s);
    }
    std::ofstream log(dir / "train_log.jsonl");
    if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
    const TrainResult r = train_loop(model, sp.train, sp.val, tcfg, [&](const EpochRecord& e) {
        log << ojson{{"epoch", e.epoch},
                     {"train_objective", e.train_objective},
                     {"val_objective", e.val_objective},
                     {"val_ll_per_event", e.val.ll_per_event},
                     {"val_accuracy", e.val.accuracy},
                     {"val_rmse", e.val.rmse}}
                   .dump()
            << '\n';
    });
    const ojson summary{{"best_epoch", r.best_epoch},
                        {"best_val_objective", r.best_val_objective},
                        {"epochs_run", r.history.size()},
                        {"stopped_early", r.stopped_early},
                        {"trainable_parameters", count_parameters(model.trainable_parameters())},
                        {"checkpoint", (dir / "model.json").string()}};
    log << summary.dump() << '\n';
    save_checkpoint(model, dir / "model.json");
    out << summary.dump() << '\n';
    return kOk;
}

int cmd_eval(const Settings& s, std::ostream& out) {
    const Model model = load_checkpoint(require(s, "checkpoint"));
    const Dataset ds = load_dataset(s);
    check_types(model, ds);
    const Dataset part = select_split(ds, s, "test");
    if (part.sequences.empty()) throw DataError("selected split has no sequences");
    const MCConfig mc = mc_config(s);
    const Metrics m = evaluate(model, part, mc, loss_weights(s));
    *open_output(s, out) << metrics_json(m, mc, model).dump(2) << '\n';
    return kOk;
}

int cmd_predict(const Settings& s, std::ostream& out) {
    const Model model = load_checkpoint(require(s, "checkpoint"));
    const Dataset ds = load_dataset(s);
    check_types(model, ds);
    const Dataset part = select_split(ds, s, "all");
    auto sink = open_output(s, out);
    for (const auto& seq : part.sequences) {
        const ad::Matrix hist = history_vectors(model, seq);
        for (std::size_t i = 0; i < seq.events.size(); ++i) {
            const ad::Vector h = hist.row(static_cast<Eigen::Index>(i)).transpose();
            const ad::Vector probs = predict_type_probs(h, model.type_head);
            const int type = argmax_lowest(probs);
            ojson line{{"sequence", seq.id},
                       {"prefix_length", i + 1},
                       {"last_time", seq.events[i].time},
                       {"predicted_type", type},
                       {"predicted_type_text", model.types[static_cast<std::size_t>(type)].text},
                       {"predicted_time", predict_time(h, model.time_head, seq.events[i].time, model.config.time_target)},
                       {"type_probs", std::vector<double>(probs.data(), probs.data() + probs.size())}};
            if (i + 1 < seq.events.size()) {
                line["actual_type"] = seq.events[i + 1].type_id;
                line["actual_time"] = seq.events[i + 1].time;
            }
            *sink << line.dump() << '\n';
        }
    }
    return kOk;
}

int cmd_simulate(const Settings& s, const std::string& process, std::ostream& out) {
    SyntheticDatasetSpec spec;
    spec.num_sequences = static_cast<std::size_t>(positive_int(s, "num_sequences", 1));
    spec.sim.horizon = s.get_double("horizon", spec.sim.horizon);
    spec.sim.max_events = static_cast<std::size_t>(positive_int(s, "max_events", 100000));
    spec.sim.seed = seed_of(s);
    spec.naming = s.get("naming", "textual") == "ordinal" ? TypeNaming::ordinal : TypeNaming::textual;
    spec.name = s.get("name", "synthetic");
    if (!(spec.sim.horizon > 0.0)) throw UsageError("horizon must be positive");

    Dataset ds;
    if (process == "poisson") {
        const double rate = s.get_double("rate", 1.0);
        if (!(rate > 0.0)) throw UsageError("rate must be positive");
        ds = simulate_poisson_dataset(rate, positive_int(s, "types", 1), spec);
    } else {
        HawkesParams p;
        if (s.has("params")) {
            std::ifstream in(s.get("params", ""));
            if (!in) throw UsageError("cannot open Hawkes params " + s.get("params", ""));
            try {
                nlohmann::json j;
                in >> j;
                p.mu = j.at("mu").get<std::vector<double>>();
                const auto rows = j.at("excitation").get<std::vector<std::vector<double>>>();
                p.excitation = ad::Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                                                rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != rows[0].size()) throw UsageError("excitation rows differ in length");
                    for (std::size_t c = 0; c < rows[r].size(); ++c) {
                        p.excitation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
                    }
                }
                p.beta = j.at("beta").get<double>();
            } catch (const nlohmann::json::exception& e) {
                throw UsageError(std::string("malformed Hawkes params: ") + e.what());
            }
        } else {
            p = uniform_hawkes(positive_int(s, "types", 2), s.get_double("mu", 0.2), s.get_double("alpha", 0.3),
                               s.get_double("beta", 1.0));
        }
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        ds = simulate_hawkes_dataset(p, spec);
    }
    *open_output(s, out) << dataset_to_json(ds).dump() << '\n';
    return kOk;
}

int cmd_stats(const Settings& s, std::ostream& out) {
    const Dataset ds = load_dataset(s);
    const DatasetStats st = dataset_stats(ds);
    if (s.get_bool("json", false)) {
        out << ojson{{"name", ds.name},
                     {"num_types", st.num_types},
                     {"num_events", st.num_events},
                     {"num_sequences", st.num_sequences},
                     {"avg_seq_length", st.avg_seq_length}}
                   .dump()
            << '\n';
        return kOk;
    }
    char row[256];
    std::snprintf(row, sizeof row, "%-16s %6s %10s %10s %12s\n", "dataset", "types", "events", "sequences",
                  "avg_length");
    out << row;
    std::snprintf(row, sizeof row, "%-16s %6zu %10zu %10zu %12.2f\n", ds.name.c_str(), st.num_types, st.num_events,
                  st.num_sequences, st.avg_seq_length);
    out << row;
    return kOk;
}

int cmd_perturb(const Settings& s, std::ostream& out) {
    const Dataset ds = load_dataset(s);
    const double ratio = s.get_double("ratio", 0.0);
    if (ratio < 0.0) throw UsageError("ratio must be >= 0");
    *open_output(s, out) << dataset_to_json(perturb_times(ds, ratio, seed_of(s))).dump() << '\n';
    return kOk;
}

int cmd_gradcheck(const Settings& s, std::ostream& out) {
    const std::uint64_t seed = seed_of(s);
    const int k = positive_int(s, "types", 3);
    SyntheticDatasetSpec spec;
    spec.num_sequences = static_cast<std::size_t>(positive_int(s, "num_sequences", 2));
    spec.sim.horizon = s.get_double("horizon", 6.0);
    spec.sim.max_events = static_cast<std::size_t>(positive_int(s, "max_events", 8));
    spec.sim.seed = seed;
    const Dataset ds = simulate_hawkes_dataset(uniform_hawkes(k, 0.5, 0.2, 1.0), spec);

    std::vector<IntensityKind> heads{IntensityKind::thp, IntensityKind::rmtpp, IntensityKind::sahp};
    if (s.get("intensity", "all") != "all") heads = {parse_enum("intensity", s.get("intensity", ""), parse_intensity_kind)};
    // Each head is paired with a temporal variant so every learnable encoder is covered.
    const std::vector<TemporalVariant> rotation{TemporalVariant::linear, TemporalVariant::time_shifted,
                                                TemporalVariant::sinusoidal};
    const double tol = s.get_double("tol", 1e-4);
    const bool lora = s.get_bool("lora", true);

    Settings defaults = s;
    for (const auto& [key, value] : std::map<std::string, std::string>{
             {"layers", "2"}, {"heads", "2"}, {"model_dim", "16"}, {"ffn_dim", "32"}}) {
        if (!defaults.has(key)) defaults.set(key, value);
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < heads.size(); ++i) {
        Settings run = defaults;
        run.set("intensity", to_string(heads[i]));
        if (!s.has("temporal")) run.set("temporal", to_string(rotation[i % rotation.size()]));
        Model model = build_model(ds, model_config(run, ds.name), seed);
        if (lora) {
            LoRAConfig lc;
            lc.rank = 2;
            lc.alpha = 4.0;
            lc.dropout = 0.0;
            model.attach_adapters(lc, seed);
            // B starts at zero; give it a value so the A gradients are exercised too.
            Rng rng(derive_seed(seed, "gradcheck"));
            for (const auto& p : model.lora_parameters()) {
                for (Eigen::Index j = 0; j < p->size(); ++j) p->value().data()[j] += 0.1 * rng.normal();
            }
        }
        model.set_scope(TrainableScope::all);
        MCConfig mc;
        mc.samples_per_interval = positive_int(s, "num_integrals", 4);
        mc.seed = seed;
        const GradCheckReport r = gradient_check(model, ds.sequences, LossWeights{}, mc);
        worst = std::max(worst, r.max_rel_error);
        ojson by_family = ojson::object();
        for (const auto& [fam, e] : r.max_rel_error_by_family) by_family[fam] = e;
        ojson line{{"intensity", to_string(heads[i])},
                   {"temporal", run.get("temporal", "")},
                   {"checked", r.checked},
                   {"max_rel_error", r.max_rel_error},
                   {"by_family", by_family}};
        if (!r.worst.empty()) {
            line["worst"] = {{"parameter", r.worst.front().parameter},
                             {"index", r.worst.front().index},
                             {"analytic", r.worst.front().analytic},
                             {"numeric", r.worst.front().numeric}};
        }
        out << line.dump() << '\n';
    }
    const bool pass = worst < tol;
    out << ojson{{"max_rel_error", worst}, {"tolerance", tol}, {"passed", pass}}.dump() << '\n';
    return pass ? kOk : kNumerical;
}

int cmd_fetch(const Settings& s, std::ostream& out) {
    const std::string url = require(s, "url");
    std::string expected = require(s, "sha256");
    std::transform(expected.begin(), expected.end(), expected.begin(), [](unsigned char c) { return std::tolower(c); });
    static const std::regex kUrl(R"(^(https?://[^/]+)(/[^?#]*)?([?][^#]*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) throw UsageError("unsupported URL: " + url);
    std::string path = m[2].matched ? m[2].str() : "/";
    const std::string name = s.get("name", std::filesystem::path(path).filename().string());
    if (name.empty()) throw UsageError("cannot derive a file name from the URL; pass --name");
    const std::filesystem::path dir = s.get("cache_dir", ".eventlm-cache");
    const std::filesystem::path target = dir / name;

    auto verify = [&](const std::string& bytes) { return sha256_hex(bytes) == expected; };
    if (std::filesystem::exists(target)) {
        std::ifstream in(target, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        if (verify(buf.str())) {
            out << target.string() << '\n';
            return kOk;
        }
    }

    httplib::Client client(m[1].str());
    client.set_follow_location(true);
    const int timeout = positive_int(s, "timeout", 60);
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    const auto res = client.Get(path + (m[3].matched ? m[3].str() : ""));
    if (!res) throw DataError("fetch failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw DataError("fetch failed: HTTP " + std::to_string(res->status));
    const std::string actual = sha256_hex(res->body);
    if (actual != expected) throw DataError("content hash mismatch: expected " + expected + ", got " + actual);
    try {
        (void)dataset_from_json(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("fetched content is not JSON: ") + e.what());
    }
    std::filesystem::create_directories(dir);
    const std::filesystem::path tmp = target.string() + ".part";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write " + tmp.string());
        f << res->body;
    }
    std::filesystem::rename(tmp, target);
    out << target.string() << '\n';
    return kOk;
}

void add_data_options(Command& c) {
    c.option("data", "dataset JSON").option("seed", "seed for splits, initialization and Monte Carlo draws", "0");
    c.option("split", "train,val,test ratios", "0.8,0.1,0.1");
    c.flag("normalize", "shift each sequence so its first event is at time 0");
}

// `fallback` replaces the displayed defaults for commands with their own.
void add_model_options(Command& c, const std::map<std::string, std::string>& fallback = {}) {
    auto d = [&](const std::string& key, const std::string& value) {
        const auto it = fallback.find(key);
        return it == fallback.end() ? value : it->second;
    };
    c.option("layers", "decoder layers", d("layers", "2"))
        .option("heads", "attention heads", d("heads", "2"))
        .option("model_dim", "hidden size", d("model_dim", "32"))
        .option("ffn_dim", "feed-forward size", d("ffn_dim", "128"))
        .option("max_seq_len", "longest token stream", "4096")
        .option("dropout", "dropout rate", "0")
        .option("temporal", "sinusoidal | linear | time_shifted", d("temporal", "sinusoidal"))
        .option("order", "type_first | time_first", "type_first")
        .option("type_format", "textual | ordinal", "textual")
        .option("intensity", "thp | rmtpp | sahp", d("intensity", "thp"))
        .option("time_target", "gap | absolute", "gap")
        .option("prompt", "true | false", "true")
        .option("prompt_file", "prompt templates file")
        .option("prompt_key", "template key (defaults to the dataset name)");
}

void add_objective_options(Command& c) {
    c.option("beta_type", "type loss weight", "1")
        .option("beta_time", "time loss weight", "1")
        .option("num_integrals", "Monte Carlo samples per interval", "20")
        .flag("stratified", "stratified Monte Carlo samples");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Event-sequence modelling with a decoder backbone and intensity heads", "eventlm"};
    app.require_subcommand(1);

    std::set<std::string> known;
    Command train(app, known, "train", "fit a model and write a checkpoint and a metrics log");
    add_data_options(train);
    add_model_options(train);
    add_objective_options(train);
    train.option("learning_rate", "Adam step size", "5e-4")
        .option("batch_size", "sequences per step", "8")
        .option("max_epoch", "epochs", "20")
        .option("patience", "epochs without validation improvement before stopping", "3")
        .option("train_fraction", "fraction of the training split used", "1")
        .option("scope", "all | lora_and_heads | heads_only", "all")
        .option("lora_rank", "adapter rank", "16")
        .option("lora_alpha", "adapter scale numerator", "16")
        .option("lora_dropout", "adapter input dropout", "0.05")
        .option("target_modules", "adapted projections, e.g. QKVO", "QKVO")
        .option("init", "start from this checkpoint")
        .option("out_dir", "output directory");

    Command eval(app, known, "eval", "metrics JSON on a split");
    add_data_options(eval);
    add_objective_options(eval);
    eval.option("checkpoint", "model checkpoint")
        .option("split_name", "train | val | test | all", "test")
        .option("out", "output file (default stdout)");

    Command predict(app, known, "predict", "next type and time after every prefix, as JSON lines");
    add_data_options(predict);
    predict.option("checkpoint", "model checkpoint")
        .option("split_name", "train | val | test | all", "all")
        .option("out", "output file (default stdout)");

    Command simulate(app, known, "simulate", "write a synthetic dataset");
    std::string process;
    simulate.app()->add_option("process", process, "poisson | hawkes")->required()->check(CLI::IsMember({"poisson", "hawkes"}));
    simulate.option("rate", "per-type Poisson rate", "1")
        .option("types", "number of event types")
        .option("horizon", "simulation window length", "100")
        .option("seed", "seed", "0")
        .option("num_sequences", "sequences to generate", "1")
        .option("max_events", "per-sequence cap", "100000")
        .option("mu", "Hawkes base rate", "0.2")
        .option("alpha", "Hawkes excitation entry", "0.3")
        .option("beta", "Hawkes decay", "1")
        .option("params", "Hawkes parameter JSON {mu, excitation, beta}")
        .option("naming", "textual | ordinal", "textual")
        .option("name", "dataset name", "synthetic")
        .option("out", "output file (default stdout)");

    Command stats(app, known, "stats", "dataset summary");
    stats.option("data", "dataset JSON").flag("normalize", "shift times first").flag("json", "JSON output");

    Command perturb(app, known, "perturb", "jitter event times by a fraction of the preceding gap");
    perturb.option("data", "dataset JSON")
        .option("ratio", "jitter ratio", "0")
        .option("seed", "seed", "0")
        .flag("normalize", "shift times first")
        .option("out", "output file (default stdout)");

    Command gradcheck(app, known, "gradcheck", "compare reverse-mode gradients with central differences");
    add_model_options(gradcheck, {{"model_dim", "16"},
                                  {"ffn_dim", "32"},
                                  {"intensity", "all"},
                                  {"temporal", "linear, time_shifted, sinusoidal per head"}});
    gradcheck.option("seed", "seed", "0")
        .option("types", "event types", "3")
        .option("num_sequences", "sequences", "2")
        .option("horizon", "simulation window", "6")
        .option("max_events", "per-sequence cap", "8")
        .option("num_integrals", "Monte Carlo samples per interval", "4")
        .option("lora", "attach adapters", "true")
        .option("tol", "maximum relative error", "1e-4");

    Command fetch(app, known, "fetch", "download a dataset JSON into a local cache after checking its SHA-256");
    fetch.option("url", "http(s) URL")
        .option("sha256", "expected hex digest")
        .option("cache_dir", "cache directory", ".eventlm-cache")
        .option("name", "file name in the cache")
        .option("timeout", "seconds", "60");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return kOk;
        err << "error: " << e.what() << '\n';
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kUsage;
    }

    try {
        if (train.app()->parsed()) return cmd_train(train.resolve(), out);
        if (eval.app()->parsed()) return cmd_eval(eval.resolve(), out);
        if (predict.app()->parsed()) return cmd_predict(predict.resolve(), out);
        if (simulate.app()->parsed()) return cmd_simulate(simulate.resolve(), process, out);
        if (stats.app()->parsed()) return cmd_stats(stats.resolve(), out);
        if (perturb.app()->parsed()) return cmd_perturb(perturb.resolve(), out);
        if (gradcheck.app()->parsed()) return cmd_gradcheck(gradcheck.resolve(), out);
        if (fetch.app()->parsed()) return cmd_fetch(fetch.resolve(), out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::length_error& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace eventlm::cli
