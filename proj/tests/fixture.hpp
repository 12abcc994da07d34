#pragma once

#include <random>
#include <vector>

#include "lorenz/attractor.hpp"
#include "lorenz/map.hpp"
#include "lorenz/renorm.hpp"

namespace fixture {

// Output of tune_parameters(0.5, 2, "2,2x6"); test_renorm re-derives it.
inline constexpr double kTunedU = 0.96351949089597033;
inline constexpr double kTunedV = 0.96351949089597033;
inline constexpr double kMargin = 0.018;

inline const lorenz::StandardFamilyMap& example_map() {
    static const lorenz::StandardFamilyMap f(0.8, 0.7, 0.5, 2.0);
    return f;
}

inline const lorenz::StandardFamilyMap& tuned_map() {
    static const lorenz::StandardFamilyMap f(kTunedU, kTunedV, 0.5, 2.0);
    return f;
}

inline const std::vector<lorenz::RenormResult>& tuned_cascade() {
    static const std::vector<lorenz::RenormResult> c = [] {
        const auto cas = lorenz::certify_cascade(lorenz::LorenzMap(tuned_map()), lorenz::parse_type_sequence("2,2x6"));
        return cas.levels;
    }();
    return c;
}

inline const lorenz::LevelStructure& tuned_levels() {
    static const lorenz::LevelStructure ls = lorenz::build_levels(lorenz::LorenzMap(tuned_map()), tuned_cascade());
    return ls;
}

inline const lorenz::RestrictedMap& tuned_restricted() {
    static const lorenz::RestrictedMap g = lorenz::restrict_rescale(lorenz::LorenzMap(tuned_map()), kMargin);
    return g;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace fixture
