#include "eventlm/checkpoint.hpp"
#include "eventlm/errors.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace eventlm;
using namespace eventlm::testing;

TEST(Checkpoint, RoundTripPreservesPredictions) {
    const Dataset ds = small_hawkes(2, 2, 5.0, 1);
    ModelConfig cfg = small_config();
    cfg.temporal = TemporalVariant::time_shifted;
    cfg.intensity = IntensityKind::rmtpp;
    cfg.prompt.order = EventOrder::time_first;
    Model m = build_model(ds, cfg, 2);
    LoRAConfig lc;
    lc.rank = 3;
    lc.targets = parse_lora_targets("QO");
    m.attach_adapters(lc, 5);
    for (const auto& p : m.lora_parameters()) p->value().setConstant(0.01);

    const auto path = std::filesystem::temp_directory_path() / "eventlm_ckpt_test.json";
    save_checkpoint(m, path);
    const Model back = load_checkpoint(path);
    std::filesystem::remove(path);

    EXPECT_EQ(back.config.temporal, TemporalVariant::time_shifted);
    EXPECT_EQ(back.config.prompt.order, EventOrder::time_first);
    ASSERT_TRUE(back.lora.has_value());
    EXPECT_EQ(lora_targets_string(back.lora->config.targets), "QO");
    EXPECT_EQ(back.vocab.tokens(), m.vocab.tokens());
    for (const auto& s : ds.sequences) EXPECT_EQ(history_vectors(back, s), history_vectors(m, s));
    EXPECT_EQ(checkpoint_to_json(back), checkpoint_to_json(m));
}

TEST(Checkpoint, RejectsForeignOrDamagedFiles) {
    EXPECT_THROW((void)checkpoint_from_json(nlohmann::json{{"format", "other"}}), DataError);
    const Dataset ds = small_hawkes(1, 1, 3.0, 1);
    const Model m = build_model(ds, small_config(8, 1, 1), 1);
    nlohmann::json j = checkpoint_to_json(m);
    j["parameters"]["final.gain"]["rows"] = 3;
    EXPECT_THROW((void)checkpoint_from_json(j), DataError);
    j = checkpoint_to_json(m);
    j["parameters"].erase("final.gain");
    EXPECT_THROW((void)checkpoint_from_json(j), DataError);
    EXPECT_THROW((void)load_checkpoint("/nonexistent/ckpt.json"), DataError);
}
