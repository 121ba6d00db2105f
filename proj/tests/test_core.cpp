#include "eventlm/core.hpp"
#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace eventlm;
using eventlm::testing::make_dataset;
using eventlm::testing::make_sequence;

TEST(Validate, WellFormedSequenceHasNoViolations) {
    EXPECT_TRUE(validate_sequence(make_sequence({0, 1, 2}, {0, 1, 0}), 2).empty());
}

TEST(Validate, ReportsNonMonotoneTime) {
    const auto v = validate_sequence(make_sequence({0, 2, 1}, {0, 0, 0}), 1);
    ASSERT_EQ(v.size(), 1U);
    EXPECT_EQ(v[0].message, "non-monotone time at index 2");
}

TEST(Validate, ReportsShortSequence) {
    const auto v = validate_sequence(make_sequence({4}, {0}), 1);
    ASSERT_FALSE(v.empty());
    EXPECT_EQ(v[0].message, "length < 2");
}

TEST(Validate, ReportsTypeOutOfRangeAndNonFinite) {
    EXPECT_FALSE(validate_sequence(make_sequence({0, 1}, {0, 3}), 2).empty());
    EXPECT_FALSE(validate_sequence(make_sequence({0, std::nan("")}, {0, 0}), 1).empty());
    EXPECT_TRUE(validate_sequence(make_sequence({1, 1}, {0, 0}), 1).empty());
}

TEST(Validate, DatasetChecksTypeTable) {
    Dataset ds = make_dataset(2, {make_sequence({0, 1}, {0, 1})});
    EXPECT_TRUE(validate_dataset(ds).empty());
    ds.types[1].text = ds.types[0].text;
    EXPECT_FALSE(validate_dataset(ds).empty());
    ds = make_dataset(2, {make_sequence({0, 1}, {0, 1})});
    ds.types[1].id = 5;
    EXPECT_FALSE(validate_dataset(ds).empty());
}

TEST(Normalize, ShiftsToFirstEvent) {
    const auto a = normalize_times(make_sequence({5, 7, 10}, {}));
    EXPECT_EQ(a.events[0].time, 0.0);
    EXPECT_EQ(a.events[1].time, 2.0);
    EXPECT_EQ(a.events[2].time, 5.0);
    const auto b = normalize_times(make_sequence({0, 1}, {}));
    EXPECT_EQ(b.events[1].time, 1.0);
    const auto c = normalize_times(make_sequence({3.5, 3.5, 4}, {}));
    EXPECT_EQ(c.events[1].time, 0.0);
    EXPECT_EQ(c.events[2].time, 0.5);
}

namespace {

Dataset numbered(std::size_t n) {
    std::vector<EventSequence> seqs;
    for (std::size_t i = 0; i < n; ++i) seqs.push_back(make_sequence({0, 1}, {0, 0}, "s" + std::to_string(i)));
    return make_dataset(1, std::move(seqs));
}

}  // namespace

TEST(Split, FloorRuleSizes) {
    const auto sp = split_dataset(numbered(3336), {}, 1);
    EXPECT_EQ(sp.train.sequences.size(), 2668U);
    EXPECT_EQ(sp.val.sequences.size() + sp.test.sequences.size(), 668U);
    EXPECT_EQ(sp.val.sequences.size(), 333U);
    EXPECT_EQ(sp.test.sequences.size(), 335U);
    for (std::uint64_t seed : {0ULL, 9ULL, 123ULL}) {
        const auto small = split_dataset(numbered(10), {}, seed);
        EXPECT_EQ(small.train.sequences.size(), 8U);
        EXPECT_EQ(small.val.sequences.size(), 1U);
        EXPECT_EQ(small.test.sequences.size(), 1U);
    }
}

TEST(Split, DeterministicAndPartitioning) {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 3 + rng.below(998);
        const Dataset ds = numbered(n);
        const auto a = split_dataset(ds, {}, trial);
        const auto b = split_dataset(ds, {}, trial);
        std::multiset<std::string> ids;
        for (const auto* part : {&a.train, &a.val, &a.test}) {
            for (const auto& s : part->sequences) ids.insert(s.id);
        }
        EXPECT_EQ(ids.size(), n);
        EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), n);
        ASSERT_EQ(a.train.sequences.size(), b.train.sequences.size());
        for (std::size_t i = 0; i < a.train.sequences.size(); ++i) {
            EXPECT_EQ(a.train.sequences[i].id, b.train.sequences[i].id);
        }
    }
}

TEST(Split, RejectsBadRatios) {
    EXPECT_THROW((void)split_dataset(numbered(5), {0.5, 0.2, 0.2}, 0), std::invalid_argument);
    EXPECT_THROW((void)split_dataset(numbered(5), {1.0, 0.0, 0.0}, 0), std::invalid_argument);
}

TEST(Stats, CountsAndAverage) {
    const Dataset ds = make_dataset(2, {make_sequence({0, 1, 2}, {0, 1, 0}), make_sequence({0, 1, 2, 3, 4}, {})});
    const auto st = dataset_stats(ds);
    EXPECT_EQ(st.num_events, 8U);
    EXPECT_EQ(st.num_sequences, 2U);
    EXPECT_EQ(st.num_types, 2U);
    EXPECT_DOUBLE_EQ(st.avg_seq_length, 4.0);
    EXPECT_THROW((void)dataset_stats(make_dataset(1, {})), std::invalid_argument);
}

TEST(Json, RoundTripPreservesData) {
    const Dataset ds = make_dataset(2, {make_sequence({0.25, 1.5, 2}, {0, 1, 0}, "a")});
    const Dataset back = dataset_from_json(dataset_to_json(ds));
    EXPECT_EQ(back.types.size(), 2U);
    EXPECT_EQ(back.types[1].text, "type beta");
    ASSERT_EQ(back.sequences.size(), 1U);
    EXPECT_EQ(back.sequences[0].id, "a");
    EXPECT_EQ(back.sequences[0].events[1].time, 1.5);
    EXPECT_EQ(back.sequences[0].events[1].type_id, 1);

    const auto path = std::filesystem::temp_directory_path() / "eventlm_core_roundtrip.json";
    write_dataset(ds, path);
    EXPECT_EQ(dataset_to_json(read_dataset(path)), dataset_to_json(ds));
    std::filesystem::remove(path);
}

TEST(Json, SchemaViolationsAreDataErrors) {
    EXPECT_THROW((void)dataset_from_json(nlohmann::json::parse(R"({"name": "x"})")), DataError);
    EXPECT_THROW((void)dataset_from_json(nlohmann::json::parse(
                     R"({"name":"x","time_unit":"s","event_types":[{"id":0,"text":"a"}],"sequences":[{"id":"q","events":[{"time":"soon","type":0}]}]})")),
                 DataError);
    EXPECT_THROW((void)read_dataset("/nonexistent/path.json"), DataError);
}
