#include "eventlm/core.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace eventlm {

std::vector<Violation> validate_sequence(const EventSequence& seq, int k_max) {
    std::vector<Violation> out;
    const auto& ev = seq.events;
    if (ev.size() < 2) {
        out.push_back({0, "length < 2"});
    }
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (!std::isfinite(ev[i].time)) {
            out.push_back({i, "non-finite time at index " + std::to_string(i)});
            continue;
        }
        if (i > 0 && std::isfinite(ev[i - 1].time) && ev[i].time < ev[i - 1].time) {
            out.push_back({i, "non-monotone time at index " + std::to_string(i)});
        }
        if (ev[i].type_id < 0 || ev[i].type_id >= k_max) {
            out.push_back({i, "type id " + std::to_string(ev[i].type_id) + " out of range at index " +
                                  std::to_string(i)});
        }
    }
    if (!ev.empty() && std::isfinite(ev.front().time) && ev.front().time < seq.window_start) {
        out.push_back({0, "first event precedes window start"});
    }
    if (!ev.empty() && std::isfinite(ev.back().time) && ev.back().time > seq.window_end) {
        out.push_back({ev.size() - 1, "last event follows window end"});
    }
    return out;
}

std::vector<std::string> validate_dataset(const Dataset& ds) {
    std::vector<std::string> out;
    std::set<std::string> texts;
    for (std::size_t i = 0; i < ds.types.size(); ++i) {
        if (ds.types[i].id != static_cast<int>(i)) {
            out.push_back("event type ids must be contiguous from 0; found " + std::to_string(ds.types[i].id) +
                          " at position " + std::to_string(i));
        }
        if (ds.types[i].text.empty()) {
            out.push_back("event type " + std::to_string(ds.types[i].id) + " has empty text");
        } else if (!texts.insert(ds.types[i].text).second) {
            out.push_back("duplicate event type text \"" + ds.types[i].text + "\"");
        }
    }
    for (const auto& seq : ds.sequences) {
        for (const auto& v : validate_sequence(seq, ds.num_types())) {
            out.push_back("sequence " + seq.id + ": " + v.message);
        }
    }
    return out;
}

EventSequence normalize_times(const EventSequence& seq) {
    EventSequence out = seq;
    if (out.events.empty()) {
        return out;
    }
    const double shift = seq.events.front().time;
    for (auto& e : out.events) {
        e.time -= shift;
    }
    out.window_start -= shift;
    out.window_end -= shift;
    return out;
}

Dataset normalize_times(const Dataset& ds) {
    Dataset out = empty_like(ds);
    out.sequences.reserve(ds.sequences.size());
    for (const auto& s : ds.sequences) {
        out.sequences.push_back(normalize_times(s));
    }
    return out;
}

Dataset empty_like(const Dataset& ds) {
    Dataset out;
    out.name = ds.name;
    out.time_unit = ds.time_unit;
    out.types = ds.types;
    return out;
}

DatasetSplit split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    if (ds.sequences.empty()) {
        throw std::invalid_argument("split_dataset: empty dataset");
    }
    if (ratios.train <= 0.0 || ratios.val <= 0.0 || ratios.test <= 0.0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split_dataset: ratios must be positive and sum to 1");
    }
    const std::size_t n = ds.sequences.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);

    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));

    DatasetSplit split{empty_like(ds), empty_like(ds), empty_like(ds)};
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& target = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
        target.sequences.push_back(ds.sequences[order[i]]);
    }
    return split;
}

DatasetStats dataset_stats(const Dataset& ds) {
    if (ds.sequences.empty()) {
        throw std::invalid_argument("dataset_stats: dataset has no sequences");
    }
    DatasetStats st;
    st.num_types = ds.types.size();
    st.num_sequences = ds.sequences.size();
    for (const auto& s : ds.sequences) {
        st.num_events += s.events.size();
    }
    st.avg_seq_length = static_cast<double>(st.num_events) / static_cast<double>(st.num_sequences);
    return st;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    try {
        Dataset ds;
        ds.name = j.at("name").get<std::string>();
        ds.time_unit = j.value("time_unit", std::string{});
        for (const auto& t : j.at("event_types")) {
            ds.types.push_back({t.at("id").get<int>(), t.at("text").get<std::string>()});
        }
        std::sort(ds.types.begin(), ds.types.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (const auto& s : j.at("sequences")) {
            EventSequence seq;
            const auto& id = s.at("id");
            seq.id = id.is_string() ? id.get<std::string>() : id.dump();
            for (const auto& e : s.at("events")) {
                seq.events.push_back({e.at("time").get<double>(), e.at("type").get<int>()});
            }
            if (s.contains("window")) {
                const auto& w = s.at("window");
                if (!w.is_array() || w.size() != 2) {
                    throw DataError("sequence " + seq.id + ": window must be a 2-element array");
                }
                seq.window_start = w[0].get<double>();
                seq.window_end = w[1].get<double>();
            } else if (!seq.events.empty()) {
                seq.window_start = seq.events.front().time;
                seq.window_end = seq.events.back().time;
            }
            ds.sequences.push_back(std::move(seq));
        }
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset schema violation: ") + e.what());
    }
}

nlohmann::json dataset_to_json(const Dataset& ds) {
    nlohmann::json types = nlohmann::json::array();
    for (const auto& t : ds.types) {
        types.push_back({{"id", t.id}, {"text", t.text}});
    }
    nlohmann::json seqs = nlohmann::json::array();
    for (const auto& s : ds.sequences) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& e : s.events) {
            events.push_back({{"time", e.time}, {"type", e.type_id}});
        }
        seqs.push_back({{"id", s.id}, {"window", {s.window_start, s.window_end}}, {"events", std::move(events)}});
    }
    return {{"name", ds.name}, {"time_unit", ds.time_unit}, {"event_types", std::move(types)},
            {"sequences", std::move(seqs)}};
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open dataset " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return dataset_from_json(j);
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write dataset " + path.string());
    }
    out << dataset_to_json(ds).dump() << '\n';
}

}  // namespace eventlm
