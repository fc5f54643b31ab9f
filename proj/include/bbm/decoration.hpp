#pragma once

// Decorations of the decorated walk: independent BBMs of age sigma, of which
// the conditioning event only needs the centered maximum.
//
// Ages up to exact_age() are simulated exactly from their own key.  Older
// decorations draw their centered maximum by inverse transform from
// quantile tables built once with the engine (exact at the first table age,
// barrier-pruned beyond).  Between table ages the quantiles are interpolated
// linearly in the age; past the last table age the law is held fixed.

#include <cstdint>
#include <string>
#include <vector>

#include "bbm/parallel.hpp"
#include "bbm/population.hpp"

namespace bbm {

struct DecorationLawConfig {
    std::vector<double> ages{8.0, 12.0, 16.0};
    std::uint64_t samples = 10000;
    double slack = 8.0;
    std::uint64_t seed = 0x6465636f;
};

class DecorationLaw {
public:
    DecorationLaw() = default;

    static DecorationLaw build(const DecorationLawConfig& cfg, Execution exec = Execution::parallel);
    /// Loads `path` when it holds a table built with the same configuration,
    /// otherwise builds one and writes it there.  An empty path only builds.
    static DecorationLaw load_or_build(const std::string& path, const DecorationLawConfig& cfg,
                                       Execution exec = Execution::parallel);

    std::string to_json() const;
    static DecorationLaw from_json(const std::string& text);

    const DecorationLawConfig& config() const noexcept { return cfg_; }
    bool empty() const noexcept { return tables_.empty(); }
    double exact_age() const noexcept { return cfg_.ages.front(); }
    /// Samples lost to pruning at table age i (their maximum is below the barrier).
    std::uint64_t lost(std::size_t i) const noexcept { return lost_[i]; }

    /// Quantile of the centered maximum at age >= exact_age() for u in (0, 1).
    /// -inf below the mass lost to pruning.
    double quantile(double age, double u) const;

private:
    double table_quantile(std::size_t i, double u) const;

    DecorationLawConfig cfg_;
    std::vector<std::vector<double>> tables_;  // finite samples, ascending
    std::vector<std::uint64_t> lost_;
};

/// True when a BBM of the given age grown exactly from `key` has a particle
/// with centered height > level.  Stops at the first such particle.
bool exact_decoration_exceeds(std::uint64_t key, double age, double level);

/// Full exact decoration of the given age grown from `key`.
Population exact_decoration(std::uint64_t key, double age);

}  // namespace bbm
