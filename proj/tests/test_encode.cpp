#include "eventlm/encode.hpp"
#include "eventlm/rng.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace eventlm;
using eventlm::testing::make_sequence;

namespace {

Dataset typed(const std::vector<std::string>& names) {
    Dataset ds;
    ds.name = "t";
    for (std::size_t i = 0; i < names.size(); ++i) ds.types.push_back({static_cast<int>(i), names[i]});
    return ds;
}

PromptSpec no_prompt(TypeFormat f = TypeFormat::textual) {
    PromptSpec p;
    p.enabled = false;
    p.type_format = f;
    return p;
}

// Direct evaluation: 1-based j, odd -> cos(t / 10000^((j-1)/D)), even -> sin(t / 10000^(j/D)).
double sinusoid(double t, int j, int d) {
    return j % 2 == 1 ? std::cos(t / std::pow(10000.0, static_cast<double>(j - 1) / d))
                      : std::sin(t / std::pow(10000.0, static_cast<double>(j) / d));
}

}  // namespace

TEST(Vocab, SizesFromTypeTexts) {
    EXPECT_EQ(build_vocab(typed({"Large", "Medium", "Small"}), no_prompt()).size(), 5);
    EXPECT_EQ(build_vocab(typed({"Nice Question", "Good Question"}), no_prompt()).size(), 5);
    EXPECT_EQ(build_vocab(typed({"a b", "c", "d"}), no_prompt(TypeFormat::ordinal)).size(), 5);
    PromptSpec p;
    p.text = "Large events happen";
    EXPECT_EQ(build_vocab(typed({"Large", "Small"}), p).size(), 2 + 4);
}

TEST(Vocab, TokenizeAndUnknownWords) {
    const Vocab v = build_vocab(typed({"Nice Question", "Large"}), no_prompt());
    EXPECT_EQ(tokenize_event_type("Nice Question", v).length(), 2);
    EXPECT_EQ(tokenize_event_type("Large", v).length(), 1);
    const auto unk = tokenize_event_type("unseen word here", v);
    ASSERT_EQ(unk.length(), 3);
    for (int id : unk.token_ids) EXPECT_EQ(id, Vocab::kUnk);
    EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
}

TEST(TemporalEncoding, ZeroTime) {
    const ad::Vector e = temporal_positional_encoding(0.0, 4);
    EXPECT_EQ(e(0), 1.0);
    EXPECT_EQ(e(1), 0.0);
    EXPECT_EQ(e(2), 1.0);
    EXPECT_EQ(e(3), 0.0);
}

TEST(TemporalEncoding, PiMatchesDirectEvaluation) {
    const double pi = std::numbers::pi;
    const ad::Vector e = temporal_positional_encoding(pi, 4);
    EXPECT_NEAR(e(0), -1.0, 1e-7);
    EXPECT_NEAR(e(1), 0.0314107, 1e-7);
    EXPECT_NEAR(e(2), 0.9995066, 1e-7);
    EXPECT_NEAR(e(3), 0.0003142, 1e-7);
    for (int j = 1; j <= 4; ++j) EXPECT_NEAR(e(j - 1), sinusoid(pi, j, 4), 1e-15);
}

TEST(TemporalEncoding, BoundedComponents) {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform(-1e4, 1e4);
        const ad::Vector e = temporal_positional_encoding(t, 32);
        EXPECT_LE(e.cwiseAbs().maxCoeff(), 1.0);
        for (int j = 1; j <= 32; j += 7) EXPECT_NEAR(e(j - 1), sinusoid(t, j, 32), 1e-9);
    }
}

TEST(TemporalEncoding, TimeShiftedReductions) {
    Rng rng(1);
    const auto spec = make_temporal_spec(TemporalVariant::time_shifted, 8, rng);
    EXPECT_TRUE(time_shifted_encoding(0, 0.0, spec).isApprox(temporal_positional_encoding(0.0, 8)));
    EXPECT_LT((time_shifted_encoding(0, 2.7, spec) - temporal_positional_encoding(2.7, 8)).norm(), 1e-15);
    spec.scale->value().setZero();
    EXPECT_LT((time_shifted_encoding(3, 100.0, spec) - time_shifted_encoding(3, -7.0, spec)).norm(), 1e-15);
    EXPECT_LT((time_shifted_encoding(3, 100.0, spec) - temporal_positional_encoding(3.0, 8)).norm(), 1e-15);
}

TEST(TemporalEncoding, LinearEmbedding) {
    Rng rng(2);
    const auto spec = make_temporal_spec(TemporalVariant::linear, 6, rng);
    EXPECT_LT((linear_time_embedding(1.0, spec) + linear_time_embedding(2.0, spec) - linear_time_embedding(0.0, spec) -
               linear_time_embedding(3.0, spec))
                  .norm(),
              1e-12);
    spec.weight->value().setZero();
    spec.bias->value().setConstant(0.25);
    EXPECT_EQ(linear_time_embedding(99.0, spec), ad::Vector::Constant(6, 0.25));
    spec.weight->value().setZero();
    spec.weight->value()(0, 0) = 1.0;
    spec.bias->value().setZero();
    ad::Vector expect = ad::Vector::Zero(6);
    expect(0) = 2.5;
    EXPECT_EQ(linear_time_embedding(2.5, spec), expect);
}

TEST(Layout, CraftedIndexCases) {
    auto events = [](std::vector<int> lens) {
        std::vector<TokenizedEvent> out;
        for (int l : lens) out.push_back({std::vector<int>(static_cast<std::size_t>(l), 2)});
        return out;
    };
    const auto a = layout_stream({5, 6, 7}, events({2, 1}), EventOrder::type_first);
    EXPECT_EQ(a.total_len(), 8);
    EXPECT_EQ(a.event_last_index, (std::vector<int>{5, 7}));
    EXPECT_TRUE(a.slots[5].is_time);

    for (auto order : {EventOrder::type_first, EventOrder::time_first}) {
        const auto b = layout_stream({}, events({1}), order);
        EXPECT_EQ(b.total_len(), 2);
        EXPECT_EQ(b.event_last_index, (std::vector<int>{1}));
    }
    const auto c = layout_stream({}, events({2}), EventOrder::time_first);
    EXPECT_TRUE(c.slots[0].is_time);
    EXPECT_FALSE(c.slots[1].is_time);
    EXPECT_EQ(c.event_last_index, (std::vector<int>{2}));
}

TEST(Layout, IndicesFollowCumulativeFormula) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const int lp = static_cast<int>(rng.below(6));
        std::vector<int> prompt(static_cast<std::size_t>(lp), 3);
        std::vector<TokenizedEvent> ev;
        const int n = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n; ++i) ev.push_back({std::vector<int>(1 + rng.below(3), 2)});
        for (auto order : {EventOrder::type_first, EventOrder::time_first}) {
            const auto lay = layout_stream(prompt, ev, order);
            ASSERT_EQ(static_cast<int>(lay.event_last_index.size()), n);
            int cum = lp;
            for (int i = 0; i < n; ++i) {
                cum += ev[static_cast<std::size_t>(i)].length() + 1;
                EXPECT_EQ(lay.event_last_index[static_cast<std::size_t>(i)], cum - 1);
            }
            EXPECT_EQ(lay.total_len(), cum);
        }
    }
}

TEST(Assemble, RowsComeFromTokensAndTimes) {
    Rng rng(3);
    const Dataset ds = eventlm::testing::make_dataset(2, {make_sequence({0.5, 1.25}, {1, 0})});
    PromptSpec prompt;
    prompt.text = "hello there";
    const Vocab vocab = build_vocab(ds, prompt);
    const auto tok = tokenize_types(ds, prompt.type_format, vocab);
    const auto spec = make_temporal_spec(TemporalVariant::sinusoidal, 4, rng);
    ad::Matrix table = ad::Matrix::Random(vocab.size(), 4);
    const auto a = assemble_sequence(ds.sequences[0], tok, prompt, vocab, spec, table, 100);
    // prompt 2 + ("type beta" 2 + time) + ("type alpha" 2 + time)
    EXPECT_EQ(a.total_len, 8);
    EXPECT_EQ(a.event_last_index, (std::vector<int>{4, 7}));
    EXPECT_EQ(a.embeddings.row(0), table.row(vocab.id_of("hello")));
    EXPECT_EQ(a.embeddings.row(3), table.row(vocab.id_of("beta")));
    EXPECT_EQ(a.embeddings.row(4).transpose(), temporal_positional_encoding(0.5, 4));
    EXPECT_EQ(a.embeddings.row(7).transpose(), temporal_positional_encoding(1.25, 4));
    EXPECT_THROW((void)assemble_sequence(ds.sequences[0], tok, prompt, vocab, spec, table, 7), std::length_error);
}

TEST(Prompts, ComposeAndParse) {
    const auto t = PromptTemplates::defaults();
    const std::string s = t.compose("earthquake", EventOrder::type_first);
    EXPECT_NE(s.find(task_description(EventOrder::type_first)), std::string::npos);
    EXPECT_NE(t.compose("unknown-dataset", EventOrder::time_first).find(task_description(EventOrder::time_first)),
              std::string::npos);
    const auto parsed = PromptTemplates::parse("# c\n[demo]\nsequence = A sequence.\ntype_first = Type then time.\ntime_first = Time then type.\n");
    EXPECT_EQ(parsed.lookup("demo").sequence, "A sequence.");
    const auto again = PromptTemplates::parse(parsed.serialize());
    EXPECT_EQ(again.lookup("demo").time_first, "Time then type.");
}

TEST(Enums, RoundTrip) {
    for (auto v : {TemporalVariant::sinusoidal, TemporalVariant::linear, TemporalVariant::time_shifted}) {
        EXPECT_EQ(parse_temporal_variant(to_string(v)), v);
    }
    EXPECT_EQ(parse_event_order(to_string(EventOrder::time_first)), EventOrder::time_first);
    EXPECT_EQ(parse_type_format(to_string(TypeFormat::ordinal)), TypeFormat::ordinal);
    EXPECT_THROW((void)parse_temporal_variant("cubic"), std::invalid_argument);
}
