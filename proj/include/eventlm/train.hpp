#pragma once

#include "eventlm/model.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace eventlm {

struct TrainConfig {
    double learning_rate{5e-4};
    int batch_size{8};
    int max_epochs{20};
    int early_stop_patience{3};
    double train_fraction{1.0};
    std::uint64_t seed{0};
    LossWeights weights;
    MCConfig mc;
    TrainableScope scope{TrainableScope::all};
    double adam_beta1{0.9};
    double adam_beta2{0.999};
    double adam_eps{1e-8};

    void validate() const;
};

// Bias-corrected Adam on one tensor. `step` is the 1-based step count after
// incrementing.
void adam_update(ad::Matrix& param, const ad::Matrix& grad, ad::Matrix& m, ad::Matrix& v, long step, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

class Adam {
public:
    Adam(std::vector<ad::ParameterPtr> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    // Applies one update from the parameters' accumulated gradients. A
    // parameter with no gradient is treated as having a zero gradient.
    void step();
    [[nodiscard]] long steps() const { return step_; }
    [[nodiscard]] const std::vector<ad::ParameterPtr>& parameters() const { return params_; }

private:
    std::vector<ad::ParameterPtr> params_;
    std::vector<ad::Matrix> m_;
    std::vector<ad::Matrix> v_;
    long step_{0};
    double lr_, beta1_, beta2_, eps_;
};

struct GradientSet {
    double objective{0.0};
    std::vector<ad::ParameterPtr> params;
    std::vector<ad::Matrix> grads;

    [[nodiscard]] const ad::Matrix* find(const std::string& name) const;
};

// Objective over `batch` and its gradient with respect to every trainable
// parameter of `model`. Frozen parameters get no entry.
[[nodiscard]] GradientSet compute_gradients(const Model& model, std::span<const EventSequence> batch,
                                            const LossWeights& weights, const MCConfig& mc, ForwardMode mode,
                                            std::uint64_t salt = 0);

struct Metrics {
    double ll_per_event{0.0};
    double accuracy{0.0};
    double rmse{0.0};
    double objective_per_event{0.0};
    double total_log_likelihood{0.0};
    std::size_t num_events{0};  // predicted events: sum of (n - 1)
    std::size_t num_correct{0};
    std::size_t num_sequences{0};
};

[[nodiscard]] Metrics evaluate(const Model& model, const Dataset& ds, const MCConfig& mc,
                               const LossWeights& weights = {});

struct EpochRecord {
    int epoch{0};
    double train_objective{0.0};  // per predicted event
    double val_objective{0.0};    // per predicted event
    Metrics val;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch{0};
    double best_val_objective{0.0};
    bool stopped_early{false};
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains the parameters selected by cfg.scope and leaves the model holding the
// weights of the epoch with the best validation objective.
TrainResult train_loop(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

// Deterministic subset used for training: seeded shuffle, then the first
// ceil(fraction * N) sequences.
[[nodiscard]] std::vector<EventSequence> training_subset(const Dataset& train, double fraction, std::uint64_t seed);

struct GradCheckEntry {
    std::string parameter;
    std::string family;
    Eigen::Index index{0};
    double analytic{0.0};
    double numeric{0.0};
    double rel_error{0.0};
};

struct GradCheckReport {
    std::size_t checked{0};
    double max_rel_error{0.0};
    std::map<std::string, double> max_rel_error_by_family;
    std::vector<GradCheckEntry> worst;  // largest errors first

    [[nodiscard]] bool passed(double tol) const { return max_rel_error < tol; }
};

struct GradCheckOptions {
    double step_scale{1e-3};   // h = step_scale * max(1, |theta|)
    double denom_floor{1e-6};  // relative error denominator floor
    std::size_t keep_worst{10};
};

// Five-point central differences on every trainable entry, compared to reverse mode.
// Forward passes run in infer mode with a fixed Monte Carlo stream so the
// objective is a deterministic smooth function of the parameters.
[[nodiscard]] GradCheckReport gradient_check(const Model& model, std::span<const EventSequence> batch,
                                             const LossWeights& weights, const MCConfig& mc,
                                             const GradCheckOptions& opts = {});

// Copies of every parameter value, for restore after training.
[[nodiscard]] std::vector<ad::Matrix> snapshot(const std::vector<ad::ParameterPtr>& params);
void restore(const std::vector<ad::ParameterPtr>& params, const std::vector<ad::Matrix>& values);

}  // namespace eventlm
