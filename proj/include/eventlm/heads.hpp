#pragma once

#include "eventlm/autodiff.hpp"

#include <string>
#include <vector>

namespace eventlm {

class Rng;

struct TypeHead {
    ad::ParameterPtr weight;  // K x H
    ad::ParameterPtr bias;    // 1 x K

    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const { return {weight, bias}; }
};

struct TimeHead {
    ad::ParameterPtr weight;  // 1 x H
    ad::ParameterPtr bias;    // 1 x 1

    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const { return {weight, bias}; }
};

struct LossWeights {
    double beta_type{1.0};
    double beta_time{1.0};
};

// gap: the time head predicts the inter-event gap, clamped at zero, and the
// predicted time is the previous event time plus that gap.
// absolute: the raw head output is the predicted time.
enum class TimeTarget { gap, absolute };

[[nodiscard]] std::string to_string(TimeTarget t);
[[nodiscard]] TimeTarget parse_time_target(const std::string& s);

[[nodiscard]] TypeHead init_type_head(int num_types, int hidden, Rng& rng);
// The bias starts at `initial_gap` so gap predictions begin in the data's range.
[[nodiscard]] TimeHead init_time_head(int hidden, double initial_gap, Rng& rng);

[[nodiscard]] ad::Vector predict_type_probs(const ad::Vector& h, const TypeHead& head);
// Argmax with ties going to the lowest id.
[[nodiscard]] int argmax_lowest(const ad::Vector& probs);
[[nodiscard]] int predict_next_type(const ad::Vector& h, const TypeHead& head);
[[nodiscard]] double predict_time_raw(const ad::Vector& h, const TimeHead& head);
// Predicted time of the next event given the current event time.
[[nodiscard]] double predict_time(const ad::Vector& h, const TimeHead& head, double last_time, TimeTarget target);

[[nodiscard]] double type_loss(const ad::Vector& probs, int true_type);
[[nodiscard]] double time_loss(const std::vector<double>& predicted, const std::vector<double>& actual);

// Graph versions over history rows 0..n-2 predicting events 1..n-1.
[[nodiscard]] ad::Var type_loss_graph(const ad::Var& history, const std::vector<int>& next_types,
                                      const TypeHead& head);
[[nodiscard]] ad::Var time_loss_graph(const ad::Var& history, const std::vector<double>& times,
                                      const TimeHead& head, TimeTarget target);

}  // namespace eventlm
