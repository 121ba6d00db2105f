#include "eventlm/train.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace eventlm {

namespace {

constexpr std::uint64_t kEvalSalt = 0;

// Temporarily freezes every parameter so forward passes skip graph bookkeeping.
class FreezeGuard {
public:
    explicit FreezeGuard(std::vector<ad::ParameterPtr> params) : params_(std::move(params)) {
        for (const auto& p : params_) {
            flags_.push_back(p->trainable());
            p->set_trainable(false);
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->set_trainable(flags_[i]);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<ad::ParameterPtr> params_;
    std::vector<bool> flags_;
};

struct SequenceEval {
    std::string id;
    double ll{0.0};
    double type_loss{0.0};
    double time_loss{0.0};
    std::size_t events{0};
    std::size_t correct{0};
};

SequenceEval evaluate_sequence(const Model& model, const EventSequence& seq, const MCConfig& mc) {
    const auto& ev = seq.events;
    if (ev.size() < 2) {
        throw DataError("sequence " + seq.id + " has fewer than 2 events");
    }
    const ad::Matrix hist = history_vectors(model, seq);
    SequenceEval out;
    out.id = seq.id;
    out.ll = sequence_log_likelihood(seq, hist, model.intensity, mc);
    for (std::size_t i = 1; i < ev.size(); ++i) {
        const ad::Vector h = hist.row(static_cast<Eigen::Index>(i - 1)).transpose();
        const ad::Vector probs = predict_type_probs(h, model.type_head);
        if (argmax_lowest(probs) == ev[i].type_id) ++out.correct;
        out.type_loss += type_loss(probs, ev[i].type_id);
        const double err = ev[i].time - predict_time(h, model.time_head, ev[i - 1].time, model.config.time_target);
        out.time_loss += err * err;
        ++out.events;
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw std::invalid_argument("train_fraction must be in (0, 1]");
    }
    if (weights.beta_type < 0.0 || weights.beta_time < 0.0) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
    mc.validate();
}

void adam_update(ad::Matrix& param, const ad::Matrix& grad, ad::Matrix& m, ad::Matrix& v, long step, double lr,
                 double beta1, double beta2, double eps) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

Adam::Adam(std::vector<ad::ParameterPtr> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(ad::Matrix::Zero(p->value().rows(), p->value().cols()));
        v_.push_back(ad::Matrix::Zero(p->value().rows(), p->value().cols()));
    }
}

void Adam::step() {
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        const ad::Matrix grad = p.has_grad() ? p.grad() : ad::Matrix::Zero(p.value().rows(), p.value().cols());
        adam_update(p.value(), grad, m_[i], v_[i], step_, lr_, beta1_, beta2_, eps_);
    }
}

const ad::Matrix* GradientSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name() == name) return &grads[i];
    }
    return nullptr;
}

GradientSet compute_gradients(const Model& model, std::span<const EventSequence> batch, const LossWeights& weights,
                              const MCConfig& mc, ForwardMode mode, std::uint64_t salt) {
    model.zero_grad();
    ad::Var obj = total_objective(model, batch, weights, mc, mode, salt);
    ad::backward(obj);
    GradientSet out;
    out.objective = obj.scalar();
    for (const auto& p : model.trainable_parameters()) {
        ad::Matrix g = p->has_grad() ? p->grad() : ad::Matrix::Zero(p->value().rows(), p->value().cols());
        if (!g.allFinite()) {
            throw NumericalError("non-finite gradient for parameter " + p->name());
        }
        out.params.push_back(p);
        out.grads.push_back(std::move(g));
    }
    return out;
}

Metrics evaluate(const Model& model, const Dataset& ds, const MCConfig& mc, const LossWeights& weights) {
    FreezeGuard guard(model.all_parameters());
    std::vector<SequenceEval> per_seq;
    per_seq.reserve(ds.sequences.size());
    for (const auto& seq : ds.sequences) per_seq.push_back(evaluate_sequence(model, seq, mc));
    // Fixed reduction order makes the result independent of dataset order.
    std::sort(per_seq.begin(), per_seq.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    Metrics m;
    double sq = 0.0;
    double objective = 0.0;
    for (const auto& s : per_seq) {
        m.total_log_likelihood += s.ll;
        m.num_events += s.events;
        m.num_correct += s.correct;
        sq += s.time_loss;
        objective += -s.ll + weights.beta_type * s.type_loss + weights.beta_time * s.time_loss;
    }
    m.num_sequences = per_seq.size();
    if (m.num_events > 0) {
        const auto n = static_cast<double>(m.num_events);
        m.ll_per_event = m.total_log_likelihood / n;
        m.accuracy = static_cast<double>(m.num_correct) / n;
        m.rmse = std::sqrt(sq / n);
        m.objective_per_event = objective / n;
    }
    return m;
}

std::vector<EventSequence> training_subset(const Dataset& train, double fraction, std::uint64_t seed) {
    std::vector<EventSequence> seqs = train.sequences;
    if (fraction >= 1.0) {
        return seqs;
    }
    Rng rng(derive_seed(seed, "train_fraction"));
    rng.shuffle(seqs);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(seqs.size()) - 1e-9)));
    seqs.resize(std::min(keep, seqs.size()));
    return seqs;
}

std::vector<ad::Matrix> snapshot(const std::vector<ad::ParameterPtr>& params) {
    std::vector<ad::Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->value());
    return out;
}

void restore(const std::vector<ad::ParameterPtr>& params, const std::vector<ad::Matrix>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = values[i];
}

TrainResult train_loop(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.sequences.empty()) {
        throw std::invalid_argument("train_loop: empty training split");
    }
    model.set_scope(cfg.scope);
    const auto all = model.all_parameters();
    Adam opt(model.trainable_parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    const std::vector<EventSequence> seqs = training_subset(train, cfg.train_fraction, cfg.seed);
    const Dataset& selection = val.sequences.empty() ? train : val;

    TrainResult result;
    result.best_val_objective = std::numeric_limits<double>::infinity();
    std::vector<ad::Matrix> best = snapshot(all);
    int bad_epochs = 0;
    std::vector<std::size_t> order(seqs.size());
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double objective = 0.0;
        std::size_t events = 0;
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t start = 0, batch_no = 0; start < order.size(); start += bs, ++batch_no) {
            std::vector<EventSequence> batch;
            for (std::size_t i = start; i < std::min(start + bs, order.size()); ++i) {
                batch.push_back(seqs[order[i]]);
                events += seqs[order[i]].events.size() - 1;
            }
            const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no);
            model.zero_grad();
            ad::Var obj;
            try {
                obj = total_objective(model, batch, cfg.weights, cfg.mc, ForwardMode::train,
                                      static_cast<std::uint64_t>(epoch));
                ad::backward(obj);
            } catch (const NumericalError& e) {
                throw NumericalError("training diverged at " + where + ": " + e.what());
            }
            for (const auto& p : opt.parameters()) {
                if (p->has_grad() && !p->grad().allFinite()) {
                    throw NumericalError("training diverged at " + where + ": non-finite gradient for " +
                                         p->name());
                }
            }
            opt.step();
            objective += obj.scalar();
        }
        model.zero_grad();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_objective = events > 0 ? objective / static_cast<double>(events) : 0.0;
        rec.val = evaluate(model, selection, cfg.mc, cfg.weights);
        rec.val_objective = rec.val.objective_per_event;
        if (!std::isfinite(rec.val_objective)) {
            throw NumericalError("validation objective is not finite at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_objective < result.best_val_objective) {
            result.best_val_objective = rec.val_objective;
            result.best_epoch = epoch;
            best = snapshot(all);
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.early_stop_patience) {
            result.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    restore(all, best);
    return result;
}

GradCheckReport gradient_check(const Model& model, std::span<const EventSequence> batch, const LossWeights& weights,
                               const MCConfig& mc, const GradCheckOptions& opts) {
    const GradientSet analytic = compute_gradients(model, batch, weights, mc, ForwardMode::infer, kEvalSalt);
    model.zero_grad();
    FreezeGuard guard(model.all_parameters());
    auto objective = [&] {
        return total_objective(model, batch, weights, mc, ForwardMode::infer, kEvalSalt).scalar();
    };

    GradCheckReport report;
    std::vector<GradCheckEntry> entries;
    for (std::size_t pi = 0; pi < analytic.params.size(); ++pi) {
        auto& p = *analytic.params[pi];
        double& family_max = report.max_rel_error_by_family[p.family()];
        for (Eigen::Index idx = 0; idx < p.size(); ++idx) {
            double& theta = p.value().data()[idx];
            const double saved = theta;
            const double h = opts.step_scale * std::max(1.0, std::abs(saved));
            auto at = [&](double offset) {
                theta = saved + offset;
                return objective();
            };
            // Five-point stencil: O(h^4) truncation lets h be large enough that
            // cancellation in f(x+h) - f(x-h) stays far below the tolerance.
            const double numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            theta = saved;
            const double a = analytic.grads[pi].data()[idx];
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
            const double rel = std::abs(a - numeric) / denom;
            family_max = std::max(family_max, rel);
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked;
            entries.push_back({p.name(), p.family(), idx, a, numeric, rel});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.rel_error > y.rel_error; });
    if (entries.size() > opts.keep_worst) entries.resize(opts.keep_worst);
    report.worst = std::move(entries);
    return report;
}

}  // namespace eventlm
