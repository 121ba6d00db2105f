#include "eventlm/synth.hpp"

#include "eventlm/rng.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <stdexcept>

namespace eventlm {

double HawkesParams::spectral_radius() const {
    const ad::Matrix scaled = excitation / beta;
    Eigen::EigenSolver<ad::Matrix> solver(scaled, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void HawkesParams::validate() const {
    const auto k = static_cast<Eigen::Index>(mu.size());
    if (k == 0) throw std::invalid_argument("Hawkes: mu must be non-empty");
    for (double m : mu) {
        if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("Hawkes: base rates must be positive");
    }
    if (excitation.rows() != k || excitation.cols() != k) {
        throw std::invalid_argument("Hawkes: excitation matrix must be K x K");
    }
    if (!excitation.allFinite() || (excitation.array() < 0.0).any()) {
        throw std::invalid_argument("Hawkes: excitation entries must be finite and non-negative");
    }
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("Hawkes: beta must be positive");
    if (spectral_radius() >= 1.0) {
        throw std::invalid_argument("Hawkes: spectral radius of A/beta must be < 1 for stationarity");
    }
}

ad::Vector HawkesParams::stationary_rates() const {
    const auto k = static_cast<Eigen::Index>(mu.size());
    const ad::Matrix m = ad::Matrix::Identity(k, k) - excitation / beta;
    const ad::Vector base = Eigen::Map<const ad::Vector>(mu.data(), k);
    return m.partialPivLu().solve(base);
}

HawkesParams uniform_hawkes(int num_types, double mu, double a, double beta) {
    HawkesParams p;
    p.mu.assign(static_cast<std::size_t>(num_types), mu);
    p.excitation = ad::Matrix::Constant(num_types, num_types, a);
    p.beta = beta;
    return p;
}

SimulationOutput simulate_poisson(double rate, int num_types, const SimConfig& sim) {
    if (!(rate > 0.0) || num_types < 1) {
        throw std::invalid_argument("simulate_poisson: rate must be positive and num_types >= 1");
    }
    if (sim.horizon < 0.0) throw std::invalid_argument("simulate_poisson: negative horizon");
    Rng rng(derive_seed(sim.seed, "poisson"));
    SimulationOutput out;
    out.sequence.window_start = 0.0;
    out.sequence.window_end = sim.horizon;
    const double total = rate * num_types;
    double t = 0.0;
    while (true) {
        t += rng.exponential(total);
        if (t > sim.horizon) break;
        if (out.sequence.events.size() >= sim.max_events) {
            out.truncated = true;
            break;
        }
        out.sequence.events.push_back({t, static_cast<int>(rng.below(static_cast<std::uint64_t>(num_types)))});
    }
    return out;
}

SimulationOutput simulate_hawkes(const HawkesParams& params, const SimConfig& sim) {
    params.validate();
    if (sim.horizon < 0.0) throw std::invalid_argument("simulate_hawkes: negative horizon");
    Rng rng(derive_seed(sim.seed, "hawkes"));
    const auto k = static_cast<Eigen::Index>(params.mu.size());
    const ad::Vector mu = Eigen::Map<const ad::Vector>(params.mu.data(), k);
    ad::Vector excited = ad::Vector::Zero(k);  // sum_j A(:, k_j) exp(-beta (t - t_j))

    SimulationOutput out;
    out.sequence.window_start = 0.0;
    out.sequence.window_end = sim.horizon;
    double t = 0.0;
    while (true) {
        // Between events the intensity only decays, so its current value bounds it.
        const double bound = mu.sum() + excited.sum();
        const double candidate = t + rng.exponential(bound);
        if (candidate > sim.horizon) break;
        excited *= std::exp(-params.beta * (candidate - t));
        t = candidate;
        const ad::Vector lam = mu + excited;
        const double total = lam.sum();
        if (rng.uniform() * bound >= total) continue;
        if (out.sequence.events.size() >= sim.max_events) {
            out.truncated = true;
            break;
        }
        double pick = rng.uniform() * total;
        Eigen::Index type = 0;
        while (type + 1 < k && pick >= lam(type)) {
            pick -= lam(type);
            ++type;
        }
        out.sequence.events.push_back({t, static_cast<int>(type)});
        excited += params.excitation.col(type);
    }
    return out;
}

ad::Vector hawkes_intensity_exact(const HawkesParams& params, const std::vector<Event>& history, double t) {
    const auto k = static_cast<Eigen::Index>(params.mu.size());
    ad::Vector lam = Eigen::Map<const ad::Vector>(params.mu.data(), k);
    for (const auto& e : history) {
        if (e.time < t) lam += params.excitation.col(e.type_id) * std::exp(-params.beta * (t - e.time));
    }
    return lam;
}

double hawkes_loglik_exact(const HawkesParams& params, const EventSequence& seq) {
    const auto& ev = seq.events;
    if (ev.size() < 2) throw std::invalid_argument("hawkes_loglik_exact: need at least 2 events");
    const auto k = static_cast<Eigen::Index>(params.mu.size());
    const ad::Vector mu = Eigen::Map<const ad::Vector>(params.mu.data(), k);
    const double t1 = ev.front().time;
    const double tn = ev.back().time;

    // Excitation state holds events strictly before the evaluation time, so
    // tied events do not excite each other.
    ad::Vector excited = ad::Vector::Zero(k);
    double state_time = t1;
    std::size_t added = 0;
    double event_term = 0.0;
    for (std::size_t i = 1; i < ev.size(); ++i) {
        while (added < i && ev[added].time < ev[i].time) {
            excited *= std::exp(-params.beta * (ev[added].time - state_time));
            state_time = ev[added].time;
            excited += params.excitation.col(ev[added].type_id);
            ++added;
        }
        const double lam = mu(ev[i].type_id) +
                           excited(ev[i].type_id) * std::exp(-params.beta * (ev[i].time - state_time));
        event_term += std::log(lam);
    }

    double compensator = mu.sum() * (tn - t1);
    for (const auto& e : ev) {
        compensator += params.excitation.col(e.type_id).sum() / params.beta *
                       (1.0 - std::exp(-params.beta * (tn - e.time)));
    }
    return event_term - compensator;
}

std::vector<double> fit_poisson_rates(const Dataset& ds) {
    std::vector<double> counts(ds.types.size(), 0.0);
    double exposure = 0.0;
    for (const auto& s : ds.sequences) {
        if (s.events.size() < 2) continue;
        for (std::size_t i = 1; i < s.events.size(); ++i) counts[static_cast<std::size_t>(s.events[i].type_id)] += 1;
        exposure += s.events.back().time - s.events.front().time;
    }
    if (!(exposure > 0.0)) throw std::invalid_argument("fit_poisson_rates: no observed time");
    for (auto& c : counts) {
        // An unseen type would give log(0) on test data; floor at half an event.
        c = std::max(c, 0.5) / exposure;
    }
    return counts;
}

double poisson_loglik(const std::vector<double>& rates, const EventSequence& seq) {
    const auto& ev = seq.events;
    if (ev.size() < 2) throw std::invalid_argument("poisson_loglik: need at least 2 events");
    double total_rate = 0.0;
    for (double r : rates) total_rate += r;
    double ll = 0.0;
    for (std::size_t i = 1; i < ev.size(); ++i) ll += std::log(rates.at(static_cast<std::size_t>(ev[i].type_id)));
    return ll - total_rate * (ev.back().time - ev.front().time);
}

EventSequence perturb_times(const EventSequence& seq, double ratio, std::uint64_t seed) {
    if (ratio < 0.0) throw std::invalid_argument("perturb_times: ratio must be >= 0");
    EventSequence out = seq;
    Rng rng(derive_seed(seed, seq.id, 0xF2ULL));
    for (std::size_t i = 1; i < seq.events.size(); ++i) {
        const double gap = seq.events[i].time - seq.events[i - 1].time;
        const double delta = rng.uniform(-1.0, 1.0) * ratio * gap;
        out.events[i].time = std::max(out.events[i - 1].time, seq.events[i].time + delta);
    }
    if (!out.events.empty()) {
        out.window_start = std::min(out.window_start, out.events.front().time);
        out.window_end = std::max(out.window_end, out.events.back().time);
    }
    return out;
}

Dataset perturb_times(const Dataset& ds, double ratio, std::uint64_t seed) {
    Dataset out = empty_like(ds);
    for (const auto& s : ds.sequences) out.sequences.push_back(perturb_times(s, ratio, seed));
    return out;
}

std::vector<EventType> label_types(int num_types, TypeNaming naming) {
    static const std::array<const char*, 24> kGreek{
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu",
        "nu", "xi", "omicron", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega"};
    std::vector<EventType> out;
    for (int k = 0; k < num_types; ++k) {
        std::string text;
        if (naming == TypeNaming::ordinal) {
            text = std::to_string(k);
        } else if (k < static_cast<int>(kGreek.size())) {
            text = std::string("type ") + kGreek[static_cast<std::size_t>(k)];
        } else {
            text = "type " + std::string(kGreek[static_cast<std::size_t>(k) % kGreek.size()]) + " " +
                   std::to_string(k / static_cast<int>(kGreek.size()));
        }
        out.push_back({k, std::move(text)});
    }
    return out;
}

namespace {

template <class Simulate>
Dataset simulate_dataset(int num_types, const SyntheticDatasetSpec& spec, Simulate&& simulate) {
    Dataset ds;
    ds.name = spec.name;
    ds.time_unit = "unit";
    ds.types = label_types(num_types, spec.naming);
    std::uint64_t attempt = 0;
    const std::size_t max_attempts = 100 * spec.num_sequences + 1000;
    while (ds.sequences.size() < spec.num_sequences) {
        if (attempt >= max_attempts) {
            throw std::runtime_error("synthetic dataset: too many sequences with fewer than 2 events");
        }
        SimConfig sim = spec.sim;
        sim.seed = derive_seed(spec.sim.seed, "sequence", attempt++);
        SimulationOutput o = simulate(sim);
        if (o.sequence.events.size() < 2) continue;
        o.sequence.id = "seq-" + std::to_string(ds.sequences.size());
        ds.sequences.push_back(std::move(o.sequence));
    }
    return ds;
}

}  // namespace

Dataset simulate_hawkes_dataset(const HawkesParams& params, const SyntheticDatasetSpec& spec) {
    return simulate_dataset(params.num_types(), spec, [&](const SimConfig& sim) { return simulate_hawkes(params, sim); });
}

Dataset simulate_poisson_dataset(double rate, int num_types, const SyntheticDatasetSpec& spec) {
    return simulate_dataset(num_types, spec, [&](const SimConfig& sim) { return simulate_poisson(rate, num_types, sim); });
}

}  // namespace eventlm
