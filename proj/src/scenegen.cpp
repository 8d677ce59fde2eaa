#include "sgrisk/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace sgrisk::gen {

using sg::ClipRecord;
using sg::ObjectKind;
using sg::ObjectState;
using sg::RiskLabel;

namespace {

constexpr double kSafeClearanceFt = 6.0;
constexpr double kCollisionThresholdFt = 4.0;  // mirrors Near_Collision
// Regenerate instead of emitting clips that land on the threshold edge,
// so the labeling rule and the Near_Collision graph edge never disagree.
constexpr double kLabelMarginFt = 0.2;

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

struct Trajectory {
    ObjectKind kind;
    std::string id;
    std::vector<double> x, y;  // world coordinates per frame
};

double min_distance_to(const Trajectory& a, const std::vector<double>& ego_x,
                       const std::vector<double>& ego_y, std::size_t* argmin = nullptr) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < a.x.size(); ++t) {
        const double d = std::hypot(a.x[t] - ego_x[t], a.y[t] - ego_y[t]);
        if (d < best) {
            best = d;
            if (argmin) *argmin = t;
        }
    }
    return best;
}

std::optional<std::string> lane_hint_for(double dx_noise_free, const ScenarioSpec& spec) {
    // Ground-truth hint only where a single lane is unambiguous; overlap
    // cases are left to the geometric path so dual isIn edges appear.
    const double b = spec.lane_width_ft / 2.0;
    const double margin = 1.5;
    if (std::abs(dx_noise_free) <= b - margin) return "middle";
    if (std::abs(dx_noise_free + b) <= margin || std::abs(dx_noise_free - b) <= margin)
        return std::nullopt;
    return dx_noise_free < 0.0 ? std::optional<std::string>("left")
                               : std::optional<std::string>("right");
}

ObjectKind random_vehicle_kind(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.7) return ObjectKind::Car;
    if (u < 0.85) return ObjectKind::Truck;
    return ObjectKind::Motorcycle;
}

ClipRecord generate_attempt(const ScenarioSpec& spec, std::size_t index, RiskLabel intent,
                            Rng& rng) {
    const std::size_t T =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.frames_min),
                                                 static_cast<std::int64_t>(spec.frames_max)));
    const double W = spec.lane_width_ft;

    // Ego: smoothstep lateral lane change over the middle third.
    const int start_lane = static_cast<int>(rng.uniform_int(0, 2));
    int target_lane;
    if (start_lane == 0) target_lane = 1;
    else if (start_lane == 2) target_lane = 1;
    else target_lane = rng.bernoulli(0.5) ? 0 : 2;
    const double x_start = (start_lane - 1) * W;
    const double x_target = (target_lane - 1) * W;
    const double ego_speed = rng.uniform(spec.speed_min_ft, spec.speed_max_ft);
    const double merge_begin = static_cast<double>(T) / 3.0;
    const double merge_len = static_cast<double>(T) / 3.0;
    std::vector<double> ego_x(T), ego_y(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double u = (static_cast<double>(t) - merge_begin) / merge_len;
        ego_x[t] = x_start + (x_target - x_start) * smoothstep(u);
        ego_y[t] = ego_speed * static_cast<double>(t);
    }

    std::size_t n_vehicles =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.vehicles_min),
                                                 static_cast<std::int64_t>(spec.vehicles_max)));
    if (intent == RiskLabel::Risky) n_vehicles = std::max<std::size_t>(n_vehicles, 1);
    const std::size_t n_peds = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.pedestrians_min),
                        static_cast<std::int64_t>(spec.pedestrians_max)));

    std::vector<Trajectory> traffic;
    std::size_t t_star = 0;

    // Threat vehicle in risky clips: positioned so the closest approach
    // falls just after the merge completes, inside the final third.
    if (intent == RiskLabel::Risky) {
        t_star = static_cast<std::size_t>(0.72 * static_cast<double>(T));
        t_star = std::min(t_star, T - 1);
        Trajectory threat;
        threat.kind = random_vehicle_kind(rng);
        threat.id = "veh_000";
        for (int attempt = 0; attempt < 50; ++attempt) {
            const double gap = rng.uniform(-2.8, 2.8);
            const double dv = rng.uniform(-0.4, 0.4);
            threat.x.assign(T, 0.0);
            threat.y.assign(T, 0.0);
            for (std::size_t t = 0; t < T; ++t) {
                threat.x[t] = x_target + rng.gaussian(0.0, spec.noise_std_ft);
                threat.y[t] = ego_y[t_star] + gap +
                              dv * (static_cast<double>(t) - static_cast<double>(t_star)) +
                              rng.gaussian(0.0, spec.noise_std_ft);
            }
            std::size_t tmin = 0;
            const double d = min_distance_to(threat, ego_x, ego_y, &tmin);
            if (d < kCollisionThresholdFt - kLabelMarginFt && tmin >= (2 * T) / 3) break;
        }
        traffic.push_back(std::move(threat));
    }

    // Lane-keeping constant-velocity traffic with jitter, kept clear of
    // the ego by a rejection margin.
    const std::size_t n_background = n_vehicles - (intent == RiskLabel::Risky ? 1 : 0);
    for (std::size_t i = 0; i < n_background; ++i) {
        Trajectory v;
        v.kind = random_vehicle_kind(rng);
        char buf[16];
        std::snprintf(buf, sizeof buf, "veh_%03zu", traffic.size());
        v.id = buf;
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            const int lane = static_cast<int>(rng.uniform_int(0, 2));
            const double speed = rng.uniform(spec.speed_min_ft, spec.speed_max_ft);
            const double y0 = rng.uniform(-80.0, 120.0);
            v.x.assign(T, 0.0);
            v.y.assign(T, 0.0);
            for (std::size_t t = 0; t < T; ++t) {
                v.x[t] = (lane - 1) * W + rng.gaussian(0.0, spec.noise_std_ft);
                v.y[t] = y0 + speed * static_cast<double>(t) +
                         rng.gaussian(0.0, spec.noise_std_ft);
            }
            placed = min_distance_to(v, ego_x, ego_y) >= kSafeClearanceFt;
        }
        if (!placed) {
            // Fall back to a distant leader that cannot interact.
            const double speed = ego_speed;
            for (std::size_t t = 0; t < T; ++t) {
                v.x[t] = ego_x[t];
                v.y[t] = ego_y[t] + 150.0 + speed * 0.0;
            }
        }
        traffic.push_back(std::move(v));
    }

    for (std::size_t i = 0; i < n_peds; ++i) {
        Trajectory p;
        p.kind = ObjectKind::Pedestrian;
        char buf[16];
        std::snprintf(buf, sizeof buf, "ped_%03zu", i);
        p.id = buf;
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double px = side * rng.uniform(20.0, 28.0);
        const double py = ego_y[T / 2] + rng.uniform(-30.0, 30.0);
        const double walk = rng.uniform(-0.3, 0.3);
        p.x.assign(T, 0.0);
        p.y.assign(T, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            p.x[t] = px + rng.gaussian(0.0, spec.noise_std_ft);
            p.y[t] = py + walk * static_cast<double>(t) + rng.gaussian(0.0, spec.noise_std_ft);
        }
        traffic.push_back(std::move(p));
    }

    ClipRecord clip;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "clip_%06zu", index);
    clip.clip_id = idbuf;
    clip.frames.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        ObjectState ego;
        ego.id = "ego";
        ego.kind = ObjectKind::EgoCar;
        clip.frames[t].push_back(std::move(ego));
        for (const auto& traj : traffic) {
            ObjectState o;
            o.id = traj.id;
            o.kind = traj.kind;
            o.x_ft = traj.x[t] - ego_x[t];
            o.y_ft = traj.y[t] - ego_y[t];
            if (sg::is_vehicle(traj.kind)) o.lane_hint = lane_hint_for(o.x_ft, spec);
            clip.frames[t].push_back(std::move(o));
        }
    }
    clip.label = intent;
    nlohmann::json meta;
    meta["generator"] = {{"index", index},
                         {"frames", T},
                         {"start_lane", start_lane},
                         {"target_lane", target_lane},
                         {"ego_speed_ft", ego_speed},
                         {"intended_label", sg::label_name(intent)}};
    if (intent == RiskLabel::Risky) meta["generator"]["t_star"] = t_star;
    clip.meta_json = meta.dump();
    return clip;
}

// Acceptance gate for one generated clip: the emergent label must match
// the construction with a margin clear of the threshold boundary.
bool clip_matches_intent(const ClipRecord& clip, RiskLabel intent, const RiskLabelRule& rule) {
    double min_d = std::numeric_limits<double>::infinity();
    for (const auto& frame : clip.frames)
        for (const auto& o : frame)
            if (o.kind != ObjectKind::EgoCar && sg::is_vehicle(o.kind))
                min_d = std::min(min_d, std::hypot(o.x_ft, o.y_ft));
    if (intent == RiskLabel::Risky)
        return min_d < rule.collision_threshold_ft - kLabelMarginFt;
    return min_d > rule.collision_threshold_ft + kLabelMarginFt;
}

}  // namespace

void validate_spec(const ScenarioSpec& spec) {
    if (spec.n_clips == 0) throw ConfigError("n_clips must be positive");
    if (spec.risky_fraction < 0.0 || spec.risky_fraction > 1.0)
        throw ConfigError("risky_fraction " + std::to_string(spec.risky_fraction) +
                          " outside [0, 1]");
    if (spec.frames_min == 0 || spec.frames_min > spec.frames_max)
        throw ConfigError("invalid frames range");
    if (spec.vehicles_min > spec.vehicles_max) throw ConfigError("invalid vehicles range");
    if (spec.pedestrians_min > spec.pedestrians_max)
        throw ConfigError("invalid pedestrians range");
    if (spec.speed_min_ft < 0.0 || spec.speed_min_ft > spec.speed_max_ft)
        throw ConfigError("invalid speed range");
    if (spec.lane_width_ft <= 0.0) throw ConfigError("lane_width_ft must be positive");
    if (spec.noise_std_ft < 0.0) throw ConfigError("noise_std_ft must be nonnegative");
    if (!spec.domain_shift.empty() && spec.domain_shift != "dense_noisy")
        throw ConfigError("unknown domain_shift preset '" + spec.domain_shift + "'");
}

ScenarioSpec apply_domain_shift(const ScenarioSpec& spec) {
    ScenarioSpec out = spec;
    if (!spec.domain_shift.empty() && spec.domain_shift != "dense_noisy")
        throw ConfigError("unknown domain_shift preset '" + spec.domain_shift + "'");
    if (spec.domain_shift == "dense_noisy") {
        out.vehicles_min = spec.vehicles_min + 2;
        out.vehicles_max = spec.vehicles_max + 3;
        out.noise_std_ft = spec.noise_std_ft * 2.0 + 0.1;
        out.speed_max_ft = spec.speed_max_ft + 1.0;
    }
    return out;
}

sg::RiskLabel label_clip(const sg::ClipRecord& clip, const RiskLabelRule& rule) {
    if (clip.frames.empty()) throw DataError("cannot label empty clip");
    if (rule.collision_threshold_ft <= 0.0)
        throw ConfigError("collision threshold must be positive");
    const std::size_t begin = rule.window_begin.value_or(0);
    const std::size_t end = std::min(rule.window_end.value_or(clip.frames.size()),
                                     clip.frames.size());
    for (std::size_t t = begin; t < end; ++t)
        for (const auto& o : clip.frames[t])
            if (o.kind != ObjectKind::EgoCar && sg::is_vehicle(o.kind) &&
                std::hypot(o.x_ft, o.y_ft) < rule.collision_threshold_ft)
                return RiskLabel::Risky;
    return RiskLabel::Safe;
}

sg::ClipRecord generate_clip_indexed(const ScenarioSpec& raw_spec, std::size_t index,
                                     sg::RiskLabel intent) {
    const ScenarioSpec spec = apply_domain_shift(raw_spec);
    const RiskLabelRule rule;
    for (std::size_t attempt = 0; attempt < 10; ++attempt) {
        Rng rng(derive_seed(derive_seed(spec.seed, index), attempt));
        ClipRecord clip = generate_attempt(spec, index, intent, rng);
        if (clip_matches_intent(clip, intent, rule) && label_clip(clip, rule) == intent)
            return clip;
    }
    throw DataError("failed to generate a " + sg::label_name(intent) + " clip at index " +
                    std::to_string(index) + " within 10 attempts");
}

sg::ClipRecord generate_clip(const ScenarioSpec& spec, Rng& rng) {
    validate_spec(spec);
    const RiskLabel intent = rng.bernoulli(spec.risky_fraction) ? RiskLabel::Risky
                                                                : RiskLabel::Safe;
    const auto index = static_cast<std::size_t>(rng.next_u64() % (1ULL << 32));
    return generate_clip_indexed(spec, index, intent);
}

Dataset generate_dataset(const ScenarioSpec& spec, std::size_t jobs) {
    validate_spec(spec);
    const std::size_t n_risky =
        static_cast<std::size_t>(std::lround(spec.risky_fraction *
                                             static_cast<double>(spec.n_clips)));
    std::vector<RiskLabel> intents(spec.n_clips, RiskLabel::Safe);
    std::fill(intents.begin(), intents.begin() + static_cast<std::ptrdiff_t>(n_risky),
              RiskLabel::Risky);
    Rng shuffle_rng(derive_seed(spec.seed, 0xD5));
    shuffle_rng.shuffle(intents);

    Dataset ds;
    ds.clips.resize(spec.n_clips);
    const std::size_t n_threads = std::max<std::size_t>(1, jobs);
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mu;
    for (std::size_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < spec.n_clips; i += n_threads)
                    ds.clips[i] = generate_clip_indexed(spec, i, intents[i]);
            } catch (...) {
                std::scoped_lock lk(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);

    nlohmann::json manifest;
    manifest["seed"] = spec.seed;
    manifest["n_clips"] = spec.n_clips;
    manifest["n_risky"] = n_risky;
    manifest["n_safe"] = spec.n_clips - n_risky;
    manifest["achieved_risky_fraction"] =
        static_cast<double>(n_risky) / static_cast<double>(spec.n_clips);
    manifest["spec"] = {{"risky_fraction", spec.risky_fraction},
                        {"frames", {spec.frames_min, spec.frames_max}},
                        {"vehicles", {spec.vehicles_min, spec.vehicles_max}},
                        {"pedestrians", {spec.pedestrians_min, spec.pedestrians_max}},
                        {"speed_ft", {spec.speed_min_ft, spec.speed_max_ft}},
                        {"lane_width_ft", spec.lane_width_ft},
                        {"noise_std_ft", spec.noise_std_ft},
                        {"domain_shift", spec.domain_shift}};
    ds.manifest_json = manifest.dump();
    return ds;
}

}  // namespace sgrisk::gen
