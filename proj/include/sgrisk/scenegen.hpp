#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgrisk/rng.hpp"
#include "sgrisk/scenegraph.hpp"

namespace sgrisk::gen {

// Kinematic lane-change scenario parameters.  Speeds are in feet per
// frame; weather and lighting have no geometric footprint here, so
// positional jitter stands in for sensing noise.
struct ScenarioSpec {
    std::uint64_t seed = 7;
    std::size_t n_clips = 100;
    double risky_fraction = 0.5;
    std::size_t frames_min = 20, frames_max = 40;
    std::size_t vehicles_min = 1, vehicles_max = 6;
    std::size_t pedestrians_min = 0, pedestrians_max = 2;
    double speed_min_ft = 2.0, speed_max_ft = 5.0;
    double lane_width_ft = 12.0;
    double noise_std_ft = 0.25;
    std::string domain_shift;  // "" or a preset name, e.g. "dense_noisy"
};

void validate_spec(const ScenarioSpec& spec);  // throws ConfigError

// Returns the spec with the named domain-shift preset applied.
ScenarioSpec apply_domain_shift(const ScenarioSpec& spec);

struct RiskLabelRule {
    double collision_threshold_ft = 4.0;
    // Frame window considered; empty bounds mean the whole clip.
    std::optional<std::size_t> window_begin, window_end;
};

// Risky iff the minimum ego-to-vehicle distance over the window is
// strictly below the collision threshold.
sg::RiskLabel label_clip(const sg::ClipRecord& clip, const RiskLabelRule& rule);

// One labeled clip; the risky/safe intent is drawn from `rng` against
// spec.risky_fraction.
sg::ClipRecord generate_clip(const ScenarioSpec& spec, Rng& rng);

// Deterministic construction of clip `index` with a fixed intent;
// substreams are derived from (seed, index) so parallel generation is
// order-independent.
sg::ClipRecord generate_clip_indexed(const ScenarioSpec& spec, std::size_t index,
                                     sg::RiskLabel intent);

struct Dataset {
    std::vector<sg::ClipRecord> clips;
    std::string manifest_json;
};

Dataset generate_dataset(const ScenarioSpec& spec, std::size_t jobs = 1);

}  // namespace sgrisk::gen
