#pragma once

// Ground-truth generators and closed-form oracles: homogeneous Poisson and
// multivariate exponential-kernel Hawkes processes, plus the time
// perturbation used for robustness runs.

#include "eventlm/autodiff.hpp"
#include "eventlm/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace eventlm {

// lambda_k(t) = mu_k + sum_{t_j < t} A(k, k_j) exp(-beta (t - t_j))
struct HawkesParams {
    std::vector<double> mu;
    ad::Matrix excitation;  // K x K, (k, j): effect of a type-j event on type k
    double beta{1.0};

    [[nodiscard]] int num_types() const { return static_cast<int>(mu.size()); }
    [[nodiscard]] double spectral_radius() const;  // of excitation / beta
    // Throws std::invalid_argument unless mu > 0, A >= 0, beta > 0 and the
    // process is stationary.
    void validate() const;
    // (I - A/beta)^-1 mu
    [[nodiscard]] ad::Vector stationary_rates() const;
};

// Symmetric helper: every base rate mu, every excitation entry a.
[[nodiscard]] HawkesParams uniform_hawkes(int num_types, double mu, double a, double beta);

struct SimConfig {
    double horizon{100.0};
    std::size_t max_events{100000};
    std::uint64_t seed{0};
};

struct SimulationOutput {
    EventSequence sequence;
    bool truncated{false};
};

[[nodiscard]] SimulationOutput simulate_poisson(double rate, int num_types, const SimConfig& sim);
// Ogata thinning with the current total intensity as the bound.
[[nodiscard]] SimulationOutput simulate_hawkes(const HawkesParams& params, const SimConfig& sim);

[[nodiscard]] ad::Vector hawkes_intensity_exact(const HawkesParams& params, const std::vector<Event>& history,
                                                double t);

// Event terms for i = 2..n and the compensator over (t_1, t_n).
[[nodiscard]] double hawkes_loglik_exact(const HawkesParams& params, const EventSequence& seq);

// Per-type rates of a homogeneous Poisson process fitted by maximum likelihood
// under the same (t_1, t_n), i = 2..n convention.
[[nodiscard]] std::vector<double> fit_poisson_rates(const Dataset& ds);
[[nodiscard]] double poisson_loglik(const std::vector<double>& rates, const EventSequence& seq);

// t'_i = max(t'_{i-1}, t_i + U[-1,1] * ratio * (t_i - t_{i-1})), event 1 fixed.
[[nodiscard]] EventSequence perturb_times(const EventSequence& seq, double ratio, std::uint64_t seed);
[[nodiscard]] Dataset perturb_times(const Dataset& ds, double ratio, std::uint64_t seed);

enum class TypeNaming { textual, ordinal };

// textual: "type alpha", "type beta", ...; ordinal: "0", "1", ...
[[nodiscard]] std::vector<EventType> label_types(int num_types, TypeNaming naming);

struct SyntheticDatasetSpec {
    std::string name{"synthetic"};
    std::size_t num_sequences{100};
    SimConfig sim;
    TypeNaming naming{TypeNaming::textual};
};

// Sequences with fewer than two events are discarded and redrawn, so the
// result always holds exactly num_sequences usable sequences.
[[nodiscard]] Dataset simulate_hawkes_dataset(const HawkesParams& params, const SyntheticDatasetSpec& spec);
[[nodiscard]] Dataset simulate_poisson_dataset(double rate, int num_types, const SyntheticDatasetSpec& spec);

}  // namespace eventlm
