#pragma once

#include "eventlm/autodiff.hpp"
#include "eventlm/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace eventlm {

class Rng;

enum class IntensityKind { thp, rmtpp, sahp };

[[nodiscard]] std::string to_string(IntensityKind k);
[[nodiscard]] IntensityKind parse_intensity_kind(const std::string& s);

// Arguments to exp() in the RMTPP head are clamped here.
inline constexpr double kRmtppClamp = 30.0;

// THP/RMTPP use alpha (1 x K), weight (K x H), bias (1 x K).
// SAHP uses w_mu, w_eta, w_gamma (K x H each).
struct IntensityHead {
    IntensityKind kind{IntensityKind::thp};
    int num_types{0};
    int hidden{0};
    ad::ParameterPtr alpha, weight, bias;
    ad::ParameterPtr w_mu, w_eta, w_gamma;

    [[nodiscard]] std::vector<ad::ParameterPtr> parameters() const;
};

[[nodiscard]] IntensityHead init_intensity_head(IntensityKind kind, int num_types, int hidden, Rng& rng);

// lambda_k = softplus(alpha_k dt + w_k . h + b_k)
[[nodiscard]] ad::Vector intensity_thp(const ad::Vector& h, double dt, const IntensityHead& head);
// lambda_k = exp(min(alpha_k dt + w_k . h + b_k, kRmtppClamp))
[[nodiscard]] ad::Vector intensity_rmtpp(const ad::Vector& h, double dt, const IntensityHead& head);
// lambda_k = softplus(mu + (eta - mu) exp(-gamma dt)), mu = gelu(W_mu h),
// eta = gelu(W_eta h), gamma = softplus(gelu(W_gamma h)).
[[nodiscard]] ad::Vector intensity_sahp(const ad::Vector& h, double dt, const IntensityHead& head);
[[nodiscard]] ad::Vector intensity(const ad::Vector& h, double dt, const IntensityHead& head);

// Batched graph version: row q is the intensity at history row rows[q] and
// elapsed time dts[q].
[[nodiscard]] ad::Var intensity_batch(const ad::Var& history, const std::vector<int>& rows,
                                      const std::vector<double>& dts, const IntensityHead& head);

struct MCConfig {
    int samples_per_interval{20};
    std::uint64_t seed{0};
    // Stratified draws per interval instead of i.i.d. uniform draws.
    bool stratified{false};

    void validate() const;
};

// One Monte Carlo query: the interval it belongs to (the history row used)
// and its elapsed time from the interval start.
struct MCSample {
    int interval{0};
    double dt{0.0};
    double weight{0.0};  // interval length / M
};

// Draws for every interval (t_i, t_{i+1}] with positive length.
[[nodiscard]] std::vector<MCSample> draw_mc_samples(const std::vector<double>& times, const MCConfig& mc,
                                                     Rng& rng);

// Stream for one sequence: derived from (mc.seed, sequence id, salt).
[[nodiscard]] std::uint64_t sequence_stream_seed(const MCConfig& mc, const std::string& sequence_id,
                                                 std::uint64_t salt = 0);

// history rows are h_1..h_n (n x H); events are read from `seq`.
[[nodiscard]] double nonevent_integral_mc(const ad::Matrix& history, const std::vector<double>& times,
                                          const IntensityHead& head, const MCConfig& mc, Rng& rng);
[[nodiscard]] double nonevent_integral_mc(const ad::Matrix& history, const std::vector<double>& times,
                                          const IntensityHead& head, const MCConfig& mc,
                                          const std::string& sequence_id);

// sum_{i=2..n} log lambda_{k_i}(t_i | h_{i-1}) minus the Monte Carlo
// integral over (t_1, t_n).
[[nodiscard]] double sequence_log_likelihood(const EventSequence& seq, const ad::Matrix& history,
                                             const IntensityHead& head, const MCConfig& mc);

// Graph version with explicit samples, so callers control the random stream.
[[nodiscard]] ad::Var sequence_log_likelihood_graph(const EventSequence& seq, const ad::Var& history,
                                                    const IntensityHead& head,
                                                    const std::vector<MCSample>& samples);

}  // namespace eventlm
