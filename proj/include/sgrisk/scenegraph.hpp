#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgrisk/errors.hpp"

namespace sgrisk::sg {

enum class ObjectKind { EgoCar, Car, Motorcycle, Pedestrian, Truck, Other };

std::string kind_name(ObjectKind k);
ObjectKind kind_from_name(const std::string& s);
bool is_vehicle(ObjectKind k);  // includes the ego

// One traffic participant in one frame, in the ego-relative frame:
// x_ft positive to the right, y_ft positive forward, ego at (0, 0).
struct ObjectState {
    std::string id;
    ObjectKind kind = ObjectKind::Car;
    double x_ft = 0.0;
    double y_ft = 0.0;
    std::optional<std::string> lane_hint;  // "left" | "middle" | "right"
};

// The 14 explicit relation types; the MR-GCN self-connection is handled
// by a dedicated transform, not an edge type.
enum class RelationType {
    NearCollision,
    SuperNear,
    VeryNear,
    Near,
    Visible,
    FrontLeft,
    LeftFront,
    LeftRear,
    RearLeft,
    RearRight,
    RightRear,
    RightFront,
    FrontRight,
    IsIn,
};

inline constexpr std::size_t kNumRelations = 14;

std::string relation_name(RelationType r);
RelationType relation_from_name(const std::string& s);
bool is_distance_relation(RelationType r);
bool is_directional_relation(RelationType r);

// Distance thresholds in feet: NearCollision 4, SuperNear 7, VeryNear 10,
// Near 16, Visible 25.
inline constexpr std::array<double, 5> kDistanceThresholdsFt = {4.0, 7.0, 10.0, 16.0, 25.0};
inline constexpr double kNearThresholdFt = 16.0;

struct GraphNode {
    std::string id;
    std::string kind;  // object kind name or one of the static node kinds
};

struct GraphEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    RelationType relation = RelationType::IsIn;
};

// Per-frame directed multigraph: static nodes (three lanes + root road)
// first, then objects sorted by id.
struct SceneGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    std::size_t node_index(const std::string& id) const;  // throws DataError if absent
};

inline constexpr const char* kLeftLane = "Left_Lane";
inline constexpr const char* kMiddleLane = "Middle_Lane";
inline constexpr const char* kRightLane = "Right_Lane";
inline constexpr const char* kRootRoad = "Root_Road";

// One-hot vocabulary order shared by graphs, models, and checkpoints.
const std::vector<std::string>& node_kind_vocab();

struct BuilderConfig {
    double lane_width_ft = 12.0;
    double overlap_margin_ft = 1.5;
};

enum class RiskLabel { Safe, Risky };

std::string label_name(RiskLabel l);
RiskLabel label_from_name(const std::string& s);

struct ClipRecord {
    std::string clip_id;
    std::vector<std::vector<ObjectState>> frames;
    RiskLabel label = RiskLabel::Safe;
    std::string meta_json;  // generator/scene parameters, opaque here
};

// ---- bird's-eye projection ------------------------------------------

// 3x3 projective matrix, row-major, normalized so m[8] == 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

using PointPair = std::pair<std::array<double, 2>, std::array<double, 2>>;  // image -> ground

// Least-squares direct linear transform from >= 4 correspondences.
Homography estimate_homography(const std::vector<PointPair>& correspondences);
Homography inverse(const Homography& h);
std::array<double, 2> project_to_birdseye(const Homography& h, double u, double v);

// ---- rule-based graph construction ----------------------------------

std::optional<RelationType> classify_distance(double d_ft);
std::optional<RelationType> classify_direction(const ObjectState& src, const ObjectState& dst);
// Lane node ids (1 or 2) for a vehicle; lane_hint overrides geometry.
std::vector<std::string> assign_lanes(const ObjectState& obj, const BuilderConfig& config);

SceneGraph build_scene_graph(const std::vector<ObjectState>& frame, const BuilderConfig& config);
std::vector<SceneGraph> clip_to_graph_sequence(const ClipRecord& clip,
                                               const BuilderConfig& config);

}  // namespace sgrisk::sg
