#include "eventlm/train.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace eventlm;
using namespace eventlm::testing;

namespace {

// One type, constant intensity 1, time head predicting a gap of exactly 1.
Model unit_poisson_model() {
    const Dataset ds = make_dataset(1, {make_sequence({0, 1, 2, 3}, {0, 0, 0, 0})});
    Model m = build_model(ds, small_config(8, 1, 1), 3);
    make_constant_thp(m.intensity, 1.0);
    m.time_head.weight->value().setZero();
    m.time_head.bias->value().setConstant(1.0);
    return m;
}

TrainConfig quick_config() {
    TrainConfig t;
    t.learning_rate = 3e-3;
    t.batch_size = 4;
    t.max_epochs = 3;
    t.early_stop_patience = 1;
    t.mc.samples_per_interval = 4;
    t.seed = 5;
    return t;
}

}  // namespace

TEST(Adam, FirstStepAndZeroGradient) {
    ad::Matrix p = ad::Matrix::Constant(1, 1, 1.0), m = ad::Matrix::Zero(1, 1), v = ad::Matrix::Zero(1, 1);
    adam_update(p, ad::Matrix::Constant(1, 1, 2.0), m, v, 1, 0.1);
    // m_hat = g, v_hat = g^2: step = -lr * g / (|g| + eps)
    EXPECT_NEAR(p(0, 0) - 1.0, -0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
    ad::Matrix q = ad::Matrix::Constant(1, 1, 4.0), m2 = ad::Matrix::Zero(1, 1), v2 = ad::Matrix::Zero(1, 1);
    adam_update(q, ad::Matrix::Zero(1, 1), m2, v2, 1, 0.1);
    EXPECT_EQ(q(0, 0), 4.0);
    ad::Matrix r = ad::Matrix::Zero(1, 2), m3 = ad::Matrix::Zero(1, 2), v3 = ad::Matrix::Zero(1, 2);
    ad::Matrix g(1, 2);
    g << -0.3, 5.0;
    adam_update(r, g, m3, v3, 1, 0.01);
    EXPECT_GT(r(0, 0), 0.0);
    EXPECT_LT(r(0, 1), 0.0);
}

TEST(Objective, PoissonSequenceWithPerfectPredictions) {
    const Model m = unit_poisson_model();
    const auto seq = make_sequence({0, 1, 2, 3}, {0, 0, 0, 0});
    const auto terms = sequence_terms(m, seq, LossWeights{}, MCConfig{}, ForwardMode::infer);
    EXPECT_NEAR(terms.log_likelihood.scalar(), -3.0, 1e-12);
    EXPECT_NEAR(terms.type_loss.scalar(), 0.0, 1e-15);
    EXPECT_NEAR(terms.time_loss.scalar(), 0.0, 1e-15);
    EXPECT_NEAR(terms.objective.scalar(), 3.0, 1e-12);

    const Dataset ds = make_dataset(1, {seq});
    const Metrics metrics = evaluate(m, ds, MCConfig{});
    EXPECT_NEAR(metrics.ll_per_event, -1.0, 1e-12);
    EXPECT_EQ(metrics.accuracy, 1.0);
    EXPECT_NEAR(metrics.rmse, 0.0, 1e-15);
    EXPECT_EQ(metrics.num_events, 3U);
}

TEST(Objective, AdditiveOverTermsAndSequences) {
    const Dataset ds = small_hawkes(2, 3, 6.0, 1);
    const Model m = build_model(ds, small_config(), 1);
    MCConfig mc;
    mc.samples_per_interval = 5;
    const LossWeights w{0.7, 0.2};
    double sum = 0;
    for (const auto& s : ds.sequences) {
        const auto t = sequence_terms(m, s, w, mc, ForwardMode::infer, 4);
        EXPECT_NEAR(t.objective.scalar(),
                    -t.log_likelihood.scalar() + 0.7 * t.type_loss.scalar() + 0.2 * t.time_loss.scalar(), 1e-9);
        sum += t.objective.scalar();
    }
    EXPECT_NEAR(total_objective(m, ds.sequences, w, mc, ForwardMode::infer, 4).scalar(), sum, 1e-9);
    const auto pure = sequence_terms(m, ds.sequences[0], LossWeights{0, 0}, mc, ForwardMode::infer);
    EXPECT_NEAR(pure.objective.scalar(), -pure.log_likelihood.scalar(), 1e-12);
}

TEST(Evaluate, AccuracyCountsEventsTwoOnward) {
    Model m = unit_poisson_model();
    // K=1 always predicts type 0; use two types instead with a biased head.
    const Dataset ds = make_dataset(2, {make_sequence({0, 1, 2}, {0, 0, 1})});
    Model m2 = build_model(ds, small_config(8, 1, 1), 1);
    m2.type_head.weight->value().setZero();
    m2.type_head.bias->value() << 5.0, 0.0;
    const Metrics r = evaluate(m2, ds, MCConfig{});
    EXPECT_EQ(r.num_events, 2U);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
}

TEST(Evaluate, InvariantToSequenceOrder) {
    Dataset ds = small_hawkes(2, 6, 5.0, 2);
    const Model m = build_model(ds, small_config(), 2);
    const Metrics a = evaluate(m, ds, MCConfig{});
    std::reverse(ds.sequences.begin(), ds.sequences.end());
    const Metrics b = evaluate(m, ds, MCConfig{});
    EXPECT_EQ(a.ll_per_event, b.ll_per_event);
    EXPECT_EQ(a.rmse, b.rmse);
    EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(Gradients, LoraScopeFiltersBaseWeights) {
    const Dataset ds = small_hawkes(2, 2, 4.0, 3);
    Model m = build_model(ds, small_config(), 3);
    LoRAConfig lc;
    lc.rank = 2;
    m.attach_adapters(lc, 1);
    m.set_scope(TrainableScope::lora_and_heads);
    const GradientSet g = compute_gradients(m, ds.sequences, LossWeights{}, MCConfig{}, ForwardMode::infer);
    EXPECT_EQ(g.find("layer0.attn.q"), nullptr);
    EXPECT_NE(g.find("lora.layer0.Q.A"), nullptr);
    EXPECT_NE(g.find("lora.layer1.O.B"), nullptr);
    EXPECT_FALSE(m.backbone.layers[0].w_q->has_grad());
}

TEST(Train, HeadsOnlyLeavesBackboneUntouched) {
    const Dataset ds = small_hawkes(2, 6, 6.0, 4);
    Model m = build_model(ds, small_config(), 4);
    const auto before = snapshot(m.base_parameters());
    const auto heads_before = snapshot(m.head_parameters());
    TrainConfig cfg = quick_config();
    cfg.scope = TrainableScope::heads_only;
    cfg.early_stop_patience = 5;
    (void)train_loop(m, ds, Dataset{}, cfg);
    const auto after = snapshot(m.base_parameters());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
    bool moved = false;
    const auto heads_after = snapshot(m.head_parameters());
    for (std::size_t i = 0; i < heads_before.size(); ++i) moved |= heads_before[i] != heads_after[i];
    EXPECT_TRUE(moved);
}

TEST(Train, EarlyStoppingRestoresBestEpoch) {
    const Dataset all = small_hawkes(2, 12, 8.0, 5);
    const auto sp = split_dataset(all, {0.5, 0.25, 0.25}, 1);
    Model m = build_model(sp.train, small_config(), 5);
    TrainConfig cfg = quick_config();
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 6;
    const TrainResult r = train_loop(m, sp.train, sp.val, cfg);
    ASSERT_FALSE(r.history.empty());
    double best = 1e300;
    for (const auto& e : r.history) best = std::min(best, e.val_objective);
    EXPECT_EQ(r.best_val_objective, best);
    EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_objective, best);
    if (r.stopped_early) EXPECT_EQ(static_cast<int>(r.history.size()), r.best_epoch + cfg.early_stop_patience);
    EXPECT_EQ(evaluate(m, sp.val, cfg.mc, cfg.weights).objective_per_event, best);
}

TEST(Train, DeterministicGivenSeed) {
    const Dataset ds = small_hawkes(2, 6, 6.0, 6);
    auto run = [&] {
        Model m = build_model(ds, small_config(), 9);
        TrainConfig cfg = quick_config();
        cfg.max_epochs = 2;
        (void)train_loop(m, ds, Dataset{}, cfg);
        return evaluate(m, ds, cfg.mc);
    };
    const Metrics a = run(), b = run();
    EXPECT_EQ(a.ll_per_event, b.ll_per_event);
    EXPECT_EQ(a.rmse, b.rmse);
}

TEST(Train, FractionSelectsDeterministicSubset) {
    const Dataset ds = small_hawkes(1, 10, 4.0, 7);
    EXPECT_EQ(training_subset(ds, 1.0, 1).size(), 10U);
    const auto a = training_subset(ds, 0.3, 1);
    const auto b = training_subset(ds, 0.3, 1);
    ASSERT_EQ(a.size(), 3U);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}

TEST(GradCheck, SmallModelAllFamilies) {
    const Dataset ds = small_hawkes(3, 1, 4.0, 8);
    ModelConfig cfg = small_config(8, 1, 2);
    cfg.temporal = TemporalVariant::linear;
    cfg.intensity = IntensityKind::sahp;
    Model m = build_model(ds, cfg, 8);
    LoRAConfig lc;
    lc.rank = 2;
    lc.dropout = 0.0;
    m.attach_adapters(lc, 1);
    Rng rng(2);
    for (const auto& p : m.lora_parameters()) {
        for (Eigen::Index i = 0; i < p->size(); ++i) p->value().data()[i] += 0.1 * rng.normal();
    }
    m.set_scope(TrainableScope::all);
    MCConfig mc;
    mc.samples_per_interval = 3;
    const GradCheckReport r = gradient_check(m, ds.sequences, LossWeights{}, mc);
    EXPECT_LT(r.max_rel_error, 1e-4);
    for (const char* fam : {"token_embedding", "temporal", "attention", "ffn", "norm", "lora", "intensity",
                            "type_head", "time_head"}) {
        EXPECT_TRUE(r.max_rel_error_by_family.count(fam)) << fam;
    }
}
