#pragma once

#include "eventlm/model.hpp"
#include "eventlm/rng.hpp"
#include "eventlm/synth.hpp"

#include <cmath>
#include <vector>

namespace eventlm::testing {

inline EventSequence make_sequence(const std::vector<double>& times, const std::vector<int>& types,
                                   const std::string& id = "s") {
    EventSequence s;
    s.id = id;
    for (std::size_t i = 0; i < times.size(); ++i) s.events.push_back({times[i], types.empty() ? 0 : types[i]});
    if (!times.empty()) {
        s.window_start = times.front();
        s.window_end = times.back();
    }
    return s;
}

inline Dataset make_dataset(int num_types, std::vector<EventSequence> seqs, const std::string& name = "synthetic") {
    Dataset ds;
    ds.name = name;
    ds.time_unit = "unit";
    ds.types = label_types(num_types, TypeNaming::textual);
    ds.sequences = std::move(seqs);
    return ds;
}

// Sets a THP head to the constant intensity c for every type.
inline void make_constant_thp(IntensityHead& head, double c) {
    head.alpha->value().setZero();
    head.weight->value().setZero();
    head.bias->value().setConstant(std::log(std::expm1(c)));
}

inline ModelConfig small_config(int dim = 16, int layers = 2, int heads = 2) {
    ModelConfig cfg;
    cfg.backbone.model_dim = dim;
    cfg.backbone.num_layers = layers;
    cfg.backbone.num_heads = heads;
    cfg.backbone.ffn_dim = 2 * dim;
    cfg.prompt.text = "a short prompt for the tests";
    return cfg;
}

inline Dataset small_hawkes(int k, std::size_t n, double horizon, std::uint64_t seed) {
    SyntheticDatasetSpec spec;
    spec.num_sequences = n;
    spec.sim.horizon = horizon;
    spec.sim.seed = seed;
    return simulate_hawkes_dataset(uniform_hawkes(k, 0.4, 0.2, 1.0), spec);
}

// Trapezoid rule with `points` nodes on [a, b].
template <class F>
double trapezoid(F&& f, double a, double b, int points) {
    if (!(b > a)) return 0.0;
    const double h = (b - a) / (points - 1);
    double s = 0.5 * (f(a) + f(b));
    for (int i = 1; i < points - 1; ++i) s += f(a + h * i);
    return s * h;
}

}  // namespace eventlm::testing
