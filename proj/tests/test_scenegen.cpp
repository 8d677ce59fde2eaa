#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sgrisk/clipio.hpp"
#include "sgrisk/scenegen.hpp"

using namespace sgrisk;
using namespace sgrisk::gen;

namespace {

double min_ego_vehicle_dist(const sg::ClipRecord& clip) {
    double best = 1e30;
    for (const auto& frame : clip.frames)
        for (const auto& o : frame) {
            if (o.kind == sg::ObjectKind::EgoCar || !sg::is_vehicle(o.kind)) continue;
            best = std::min(best, std::hypot(o.x_ft, o.y_ft));
        }
    return best;
}

}  // namespace

TEST_CASE("spec validation") {
    ScenarioSpec bad;
    bad.risky_fraction = 1.5;
    CHECK_THROWS_AS(validate_spec(bad), ConfigError);
    bad = {};
    bad.frames_min = 10;
    bad.frames_max = 5;
    CHECK_THROWS_AS(validate_spec(bad), ConfigError);
    bad = {};
    bad.noise_std_ft = -1;
    CHECK_THROWS_AS(validate_spec(bad), ConfigError);
    CHECK_NOTHROW(validate_spec(ScenarioSpec{}));
    CHECK_THROWS_AS(apply_domain_shift([] {
                        ScenarioSpec s;
                        s.domain_shift = "monsoon";
                        return s;
                    }()),
                    ConfigError);
}

TEST_CASE("label rule") {
    sg::ClipRecord clip;
    clip.clip_id = "t";
    clip.frames = {{{"ego", sg::ObjectKind::EgoCar, 0, 0, std::nullopt}}};
    CHECK(label_clip(clip, {}) == sg::RiskLabel::Safe);  // ego only

    clip.frames.push_back({{"ego", sg::ObjectKind::EgoCar, 0, 0, std::nullopt},
                           {"c1", sg::ObjectKind::Car, 3, 0, std::nullopt}});
    CHECK(label_clip(clip, {}) == sg::RiskLabel::Risky);  // 3 < 4

    clip.frames.back()[1].x_ft = 4.0;  // exactly at the threshold: not risky (strict <)
    CHECK(label_clip(clip, {}) == sg::RiskLabel::Safe);

    // pedestrians do not trigger the vehicle collision rule
    clip.frames.back()[1].kind = sg::ObjectKind::Pedestrian;
    clip.frames.back()[1].x_ft = 1.0;
    CHECK(label_clip(clip, {}) == sg::RiskLabel::Safe);

    // windowed rule ignores frames outside the window
    clip.frames.back()[1].kind = sg::ObjectKind::Car;
    RiskLabelRule windowed;
    windowed.window_begin = 0;
    windowed.window_end = 1;
    CHECK(label_clip(clip, windowed) == sg::RiskLabel::Safe);
}

TEST_CASE("ego-only spec yields safe clips") {
    ScenarioSpec spec;
    spec.vehicles_min = spec.vehicles_max = 0;
    spec.pedestrians_min = spec.pedestrians_max = 0;
    spec.risky_fraction = 0.0;
    spec.n_clips = 3;
    const Dataset ds = generate_dataset(spec);
    for (const auto& c : ds.clips) {
        CHECK(c.label == sg::RiskLabel::Safe);
        for (const auto& f : c.frames) {
            CHECK(f.size() == 1);
            CHECK(f[0].kind == sg::ObjectKind::EgoCar);
        }
    }
}

TEST_CASE("determinism") {
    ScenarioSpec spec;
    spec.n_clips = 6;
    spec.seed = 123;
    const Dataset a = generate_dataset(spec, 1);
    const Dataset b = generate_dataset(spec, 4);  // jobs must not change results
    REQUIRE(a.clips.size() == b.clips.size());
    for (std::size_t i = 0; i < a.clips.size(); ++i)
        CHECK(sg::clip_to_json_line(a.clips[i]) == sg::clip_to_json_line(b.clips[i]));
    CHECK(a.manifest_json == b.manifest_json);
}

TEST_CASE("generation and labeling agree") {
    ScenarioSpec spec;
    spec.n_clips = 40;
    spec.seed = 5;
    const Dataset ds = generate_dataset(spec);
    REQUIRE(ds.clips.size() == 40);
    std::size_t risky = 0;
    for (const auto& c : ds.clips) {
        CHECK(label_clip(c, {}) == c.label);
        if (c.label == sg::RiskLabel::Risky) ++risky;
        // every clip converts to graphs without error
        CHECK_NOTHROW(sg::clip_to_graph_sequence(c, {}));
    }
    CHECK(std::abs(static_cast<double>(risky) / 40.0 - spec.risky_fraction) <= 0.02);
}

TEST_CASE("risky clips carry a Near_Collision edge incident to ego, safe clips none") {
    ScenarioSpec spec;
    spec.n_clips = 50;
    spec.seed = 21;
    const Dataset ds = generate_dataset(spec);
    for (const auto& c : ds.clips) {
        bool near_collision = false;
        for (const auto& g : sg::clip_to_graph_sequence(c, {})) {
            const auto e = g.node_index("ego");
            for (const auto& edge : g.edges)
                if (edge.relation == sg::RelationType::NearCollision &&
                    (edge.src == e || edge.dst == e) &&
                    sg::is_vehicle(sg::kind_from_name(
                        g.nodes[edge.src == e ? edge.dst : edge.src].kind)))
                    near_collision = true;
        }
        CHECK(near_collision == (c.label == sg::RiskLabel::Risky));
    }
}

TEST_CASE("label margin keeps clips away from the threshold boundary") {
    ScenarioSpec spec;
    spec.n_clips = 30;
    spec.seed = 77;
    const Dataset ds = generate_dataset(spec);
    for (const auto& c : ds.clips) {
        const double d = min_ego_vehicle_dist(c);
        if (c.label == sg::RiskLabel::Risky) CHECK(d < 4.0);
        else if (d < 1e29) CHECK(d > 4.0);
    }
}

TEST_CASE("frame counts respect the configured range") {
    ScenarioSpec spec;
    spec.n_clips = 10;
    spec.frames_min = 22;
    spec.frames_max = 28;
    const Dataset ds = generate_dataset(spec);
    for (const auto& c : ds.clips) {
        CHECK(c.frames.size() >= 22);
        CHECK(c.frames.size() <= 28);
    }
}

TEST_CASE("domain shift preset changes the spec") {
    ScenarioSpec spec;
    spec.domain_shift = "dense_noisy";
    const ScenarioSpec shifted = apply_domain_shift(spec);
    CHECK(shifted.vehicles_max > spec.vehicles_max);
    CHECK(shifted.noise_std_ft > spec.noise_std_ft);
}
