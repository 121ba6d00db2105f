#include "eventlm/tpp.hpp"

#include "eventlm/errors.hpp"
#include "eventlm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace eventlm {

namespace {

ad::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    }
    return m;
}

std::vector<double> event_times(const EventSequence& seq) {
    std::vector<double> t;
    t.reserve(seq.events.size());
    for (const auto& e : seq.events) t.push_back(e.time);
    return t;
}

ad::Vector gelu_vec(const ad::Vector& x) { return x.unaryExpr([](double v) { return ad::gelu_value(v); }); }
ad::Vector softplus_vec(const ad::Vector& x) {
    return x.unaryExpr([](double v) { return ad::softplus_value(v); });
}

}  // namespace

std::string to_string(IntensityKind k) {
    switch (k) {
        case IntensityKind::thp: return "thp";
        case IntensityKind::rmtpp: return "rmtpp";
        case IntensityKind::sahp: return "sahp";
    }
    return "thp";
}

IntensityKind parse_intensity_kind(const std::string& s) {
    if (s == "thp") return IntensityKind::thp;
    if (s == "rmtpp") return IntensityKind::rmtpp;
    if (s == "sahp") return IntensityKind::sahp;
    throw std::invalid_argument("unknown intensity head '" + s + "' (thp|rmtpp|sahp)");
}

std::vector<ad::ParameterPtr> IntensityHead::parameters() const {
    std::vector<ad::ParameterPtr> out;
    for (const auto& p : {alpha, weight, bias, w_mu, w_eta, w_gamma}) {
        if (p) out.push_back(p);
    }
    return out;
}

IntensityHead init_intensity_head(IntensityKind kind, int num_types, int hidden, Rng& rng) {
    if (num_types < 1 || hidden < 1) {
        throw std::invalid_argument("intensity head: sizes must be positive");
    }
    IntensityHead head;
    head.kind = kind;
    head.num_types = num_types;
    head.hidden = hidden;
    const double sd = 0.1 / std::sqrt(static_cast<double>(hidden));
    auto p = [](const std::string& name, ad::Matrix m) {
        return std::make_shared<ad::Parameter>("intensity." + name, "intensity", std::move(m));
    };
    if (kind == IntensityKind::sahp) {
        head.w_mu = p("w_mu", normal_matrix(num_types, hidden, sd, rng));
        head.w_eta = p("w_eta", normal_matrix(num_types, hidden, sd, rng));
        head.w_gamma = p("w_gamma", normal_matrix(num_types, hidden, sd, rng));
    } else {
        head.alpha = p("alpha", ad::Matrix::Constant(1, num_types, -0.1));
        head.weight = p("weight", normal_matrix(num_types, hidden, sd, rng));
        head.bias = p("bias", ad::Matrix::Zero(1, num_types));
    }
    return head;
}

ad::Vector intensity_thp(const ad::Vector& h, double dt, const IntensityHead& head) {
    ad::Vector arg = head.alpha->value().row(0).transpose() * dt + head.weight->value() * h +
                     head.bias->value().row(0).transpose();
    return softplus_vec(arg);
}

ad::Vector intensity_rmtpp(const ad::Vector& h, double dt, const IntensityHead& head) {
    ad::Vector arg = head.alpha->value().row(0).transpose() * dt + head.weight->value() * h +
                     head.bias->value().row(0).transpose();
    return arg.cwiseMin(kRmtppClamp).array().exp();
}

ad::Vector intensity_sahp(const ad::Vector& h, double dt, const IntensityHead& head) {
    const ad::Vector mu = gelu_vec(head.w_mu->value() * h);
    const ad::Vector eta = gelu_vec(head.w_eta->value() * h);
    const ad::Vector gamma = softplus_vec(gelu_vec(head.w_gamma->value() * h));
    ad::Vector arg = mu.array() + (eta - mu).array() * (-gamma.array() * dt).exp();
    return softplus_vec(arg);
}

ad::Vector intensity(const ad::Vector& h, double dt, const IntensityHead& head) {
    switch (head.kind) {
        case IntensityKind::thp: return intensity_thp(h, dt, head);
        case IntensityKind::rmtpp: return intensity_rmtpp(h, dt, head);
        case IntensityKind::sahp: return intensity_sahp(h, dt, head);
    }
    throw std::logic_error("unreachable intensity kind");
}

ad::Var intensity_batch(const ad::Var& history, const std::vector<int>& rows, const std::vector<double>& dts,
                        const IntensityHead& head) {
    if (rows.size() != dts.size()) {
        throw std::invalid_argument("intensity_batch: rows and dts differ in length");
    }
    const ad::Vector dt = Eigen::Map<const ad::Vector>(dts.data(), static_cast<Eigen::Index>(dts.size()));
    if (head.kind == IntensityKind::sahp) {
        ad::Var mu = ad::gather_rows(ad::gelu(ad::linear(history, head.w_mu->var())), rows);
        ad::Var eta = ad::gather_rows(ad::gelu(ad::linear(history, head.w_eta->var())), rows);
        ad::Var gamma = ad::gather_rows(ad::softplus(ad::gelu(ad::linear(history, head.w_gamma->var()))), rows);
        ad::Var decay = ad::exp(ad::scale(ad::scale_rows(gamma, dt), -1.0));
        return ad::softplus(ad::add(mu, ad::mul(ad::sub(eta, mu), decay)));
    }
    ad::Var base = ad::gather_rows(ad::add_row(ad::linear(history, head.weight->var()), head.bias->var()), rows);
    ad::Var arg = ad::add(base, ad::matmul(ad::constant(dt), head.alpha->var()));
    if (head.kind == IntensityKind::rmtpp) {
        return ad::exp(ad::clamp_max(arg, kRmtppClamp));
    }
    return ad::softplus(arg);
}

void MCConfig::validate() const {
    if (samples_per_interval < 1) {
        throw std::invalid_argument("Monte Carlo samples per interval must be >= 1");
    }
}

std::vector<MCSample> draw_mc_samples(const std::vector<double>& times, const MCConfig& mc, Rng& rng) {
    mc.validate();
    std::vector<MCSample> out;
    const int m = mc.samples_per_interval;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double len = times[i + 1] - times[i];
        if (!(len > 0.0)) continue;
        for (int s = 0; s < m; ++s) {
            // u lies in (0, 1]: samples fall in (t_i, t_{i+1}].
            const double u = mc.stratified ? (s + rng.uniform_open_closed()) / m : rng.uniform_open_closed();
            out.push_back({static_cast<int>(i), u * len, len / m});
        }
    }
    return out;
}

std::uint64_t sequence_stream_seed(const MCConfig& mc, const std::string& sequence_id, std::uint64_t salt) {
    return derive_seed(mc.seed, sequence_id, salt);
}

double nonevent_integral_mc(const ad::Matrix& history, const std::vector<double>& times, const IntensityHead& head,
                            const MCConfig& mc, Rng& rng) {
    if (times.size() < 2) {
        throw std::invalid_argument("nonevent_integral_mc: need at least 2 events");
    }
    if (history.rows() < static_cast<Eigen::Index>(times.size()) - 1) {
        throw std::invalid_argument("nonevent_integral_mc: too few history vectors");
    }
    double total = 0.0;
    for (const auto& s : draw_mc_samples(times, mc, rng)) {
        total += s.weight * intensity(history.row(s.interval).transpose(), s.dt, head).sum();
    }
    return total;
}

double nonevent_integral_mc(const ad::Matrix& history, const std::vector<double>& times, const IntensityHead& head,
                            const MCConfig& mc, const std::string& sequence_id) {
    Rng rng(sequence_stream_seed(mc, sequence_id));
    return nonevent_integral_mc(history, times, head, mc, rng);
}

double sequence_log_likelihood(const EventSequence& seq, const ad::Matrix& history, const IntensityHead& head,
                               const MCConfig& mc) {
    const auto& ev = seq.events;
    if (ev.size() < 2) {
        throw std::invalid_argument("sequence_log_likelihood: need at least 2 events");
    }
    double event_term = 0.0;
    for (std::size_t i = 1; i < ev.size(); ++i) {
        const ad::Vector lam = intensity(history.row(static_cast<Eigen::Index>(i - 1)).transpose(),
                                         ev[i].time - ev[i - 1].time, head);
        const double l = lam(ev[i].type_id);
        if (!(l > 0.0) || !std::isfinite(l)) {
            throw NumericalError("intensity at event " + std::to_string(i) + " of sequence " + seq.id +
                                 " is not positive and finite");
        }
        event_term += std::log(l);
    }
    return event_term - nonevent_integral_mc(history, event_times(seq), head, mc, seq.id);
}

ad::Var sequence_log_likelihood_graph(const EventSequence& seq, const ad::Var& history, const IntensityHead& head,
                                      const std::vector<MCSample>& samples) {
    const auto& ev = seq.events;
    const std::size_t n = ev.size();
    if (n < 2) {
        throw std::invalid_argument("sequence_log_likelihood_graph: need at least 2 events");
    }
    std::vector<int> rows;
    std::vector<double> dts;
    ad::Vector weights(static_cast<Eigen::Index>(n - 1 + samples.size()));
    rows.reserve(n - 1 + samples.size());
    dts.reserve(n - 1 + samples.size());
    std::vector<int> pick_rows;
    std::vector<int> pick_cols;
    for (std::size_t i = 1; i < n; ++i) {
        pick_rows.push_back(static_cast<int>(rows.size()));
        pick_cols.push_back(ev[i].type_id);
        weights(static_cast<Eigen::Index>(rows.size())) = 0.0;
        rows.push_back(static_cast<int>(i - 1));
        dts.push_back(ev[i].time - ev[i - 1].time);
    }
    for (const auto& s : samples) {
        weights(static_cast<Eigen::Index>(rows.size())) = s.weight;
        rows.push_back(s.interval);
        dts.push_back(s.dt);
    }
    ad::Var lam = intensity_batch(history, rows, dts, head);
    ad::Var at_events = ad::pick(lam, pick_rows, pick_cols);
    if ((at_events.value().array() <= 0.0).any() || !at_events.value().allFinite()) {
        throw NumericalError("intensity at an event of sequence " + seq.id + " is not positive and finite");
    }
    ad::Var event_term = ad::sum(ad::log(at_events));
    ad::Var integral = ad::sum(ad::scale_rows(ad::row_sums(lam), weights));
    return ad::sub(event_term, integral);
}

}  // namespace eventlm
