#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace eventlm {

struct EventType {
    int id{0};
    std::string text;
};

struct Event {
    double time{0.0};
    int type_id{0};
};

struct EventSequence {
    std::string id;
    std::vector<Event> events;
    double window_start{0.0};
    double window_end{0.0};

    [[nodiscard]] std::size_t size() const { return events.size(); }
};

struct Dataset {
    std::string name;
    std::string time_unit;
    std::vector<EventType> types;
    std::vector<EventSequence> sequences;

    [[nodiscard]] int num_types() const { return static_cast<int>(types.size()); }
};

struct DatasetStats {
    std::size_t num_types{0};
    std::size_t num_events{0};
    std::size_t num_sequences{0};
    double avg_seq_length{0.0};
};

struct Violation {
    std::size_t index{0};
    std::string message;
};

struct SplitRatios {
    double train{0.8};
    double val{0.1};
    double test{0.1};
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Empty result means the sequence is usable for training and evaluation.
[[nodiscard]] std::vector<Violation> validate_sequence(const EventSequence& seq, int k_max);

// Sequence-level violations plus type-table checks (contiguous ids, unique
// non-empty texts). Sequence violations are prefixed with the sequence id.
[[nodiscard]] std::vector<std::string> validate_dataset(const Dataset& ds);

// Shifts all times and the window so the first event sits at 0.
[[nodiscard]] EventSequence normalize_times(const EventSequence& seq);
[[nodiscard]] Dataset normalize_times(const Dataset& ds);

// Seeded shuffle, then floor(N*r_train) / floor(N*r_val) / remainder.
[[nodiscard]] DatasetSplit split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

[[nodiscard]] DatasetStats dataset_stats(const Dataset& ds);

// Same metadata and type table, no sequences.
[[nodiscard]] Dataset empty_like(const Dataset& ds);

// JSON schema:
// {"name", "time_unit", "event_types": [{"id","text"}], "sequences": [{"id","window":[a,b],"events":[{"time","type"}]}]}
[[nodiscard]] Dataset dataset_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json dataset_to_json(const Dataset& ds);
[[nodiscard]] Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

}  // namespace eventlm
