#include "eventlm/heads.hpp"

#include "eventlm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace eventlm {

std::string to_string(TimeTarget t) { return t == TimeTarget::gap ? "gap" : "absolute"; }

TimeTarget parse_time_target(const std::string& s) {
    if (s == "gap") return TimeTarget::gap;
    if (s == "absolute") return TimeTarget::absolute;
    throw std::invalid_argument("unknown time target '" + s + "' (gap|absolute)");
}

TypeHead init_type_head(int num_types, int hidden, Rng& rng) {
    const double sd = 0.1 / std::sqrt(static_cast<double>(hidden));
    ad::Matrix w(num_types, hidden);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * rng.normal();
    }
    return {std::make_shared<ad::Parameter>("type_head.weight", "type_head", std::move(w)),
            std::make_shared<ad::Parameter>("type_head.bias", "type_head", ad::Matrix::Zero(1, num_types))};
}

TimeHead init_time_head(int hidden, double initial_gap, Rng& rng) {
    const double sd = 0.1 / std::sqrt(static_cast<double>(hidden));
    ad::Matrix w(1, hidden);
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(0, j) = sd * rng.normal();
    return {std::make_shared<ad::Parameter>("time_head.weight", "time_head", std::move(w)),
            std::make_shared<ad::Parameter>("time_head.bias", "time_head", ad::Matrix::Constant(1, 1, initial_gap))};
}

ad::Vector predict_type_probs(const ad::Vector& h, const TypeHead& head) {
    ad::Vector logits = head.weight->value() * h + head.bias->value().row(0).transpose();
    const double mx = logits.maxCoeff();
    ad::Vector p = (logits.array() - mx).exp();
    return p / p.sum();
}

int argmax_lowest(const ad::Vector& probs) {
    int best = 0;
    for (Eigen::Index k = 1; k < probs.size(); ++k) {
        if (probs(k) > probs(best)) best = static_cast<int>(k);
    }
    return best;
}

int predict_next_type(const ad::Vector& h, const TypeHead& head) { return argmax_lowest(predict_type_probs(h, head)); }

double predict_time_raw(const ad::Vector& h, const TimeHead& head) {
    return head.weight->value().row(0).dot(h.transpose()) + head.bias->value()(0, 0);
}

double predict_time(const ad::Vector& h, const TimeHead& head, double last_time, TimeTarget target) {
    const double raw = predict_time_raw(h, head);
    return target == TimeTarget::gap ? last_time + std::max(0.0, raw) : raw;
}

double type_loss(const ad::Vector& probs, int true_type) {
    if (true_type < 0 || true_type >= probs.size()) {
        throw std::out_of_range("type_loss: true type out of range");
    }
    return -std::log(probs(true_type));
}

double time_loss(const std::vector<double>& predicted, const std::vector<double>& actual) {
    if (predicted.size() != actual.size()) {
        throw std::invalid_argument("time_loss: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double e = actual[i] - predicted[i];
        s += e * e;
    }
    return s;
}

ad::Var type_loss_graph(const ad::Var& history, const std::vector<int>& next_types, const TypeHead& head) {
    ad::Var logp = ad::log_softmax_rows(ad::add_row(ad::linear(history, head.weight->var()), head.bias->var()));
    std::vector<int> rows(next_types.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return ad::scale(ad::sum(ad::pick(logp, rows, next_types)), -1.0);
}

ad::Var time_loss_graph(const ad::Var& history, const std::vector<double>& times, const TimeHead& head,
                        TimeTarget target) {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (history.rows() != n - 1) {
        throw std::invalid_argument("time_loss_graph: need n-1 history rows for n times");
    }
    ad::Var raw = ad::add_row(ad::linear(history, head.weight->var()), head.bias->var());
    ad::Matrix truth(n - 1, 1);
    for (Eigen::Index i = 1; i < n; ++i) {
        truth(i - 1, 0) = target == TimeTarget::gap ? times[i] - times[i - 1] : times[i];
    }
    ad::Var pred = target == TimeTarget::gap ? ad::relu(raw) : raw;
    return ad::sum(ad::square(ad::sub(ad::constant(std::move(truth)), pred)));
}

}  // namespace eventlm
