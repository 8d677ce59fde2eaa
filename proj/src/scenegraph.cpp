#include "sgrisk/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sgrisk::sg {

std::string kind_name(ObjectKind k) {
    switch (k) {
        case ObjectKind::EgoCar: return "ego_car";
        case ObjectKind::Car: return "car";
        case ObjectKind::Motorcycle: return "motorcycle";
        case ObjectKind::Pedestrian: return "pedestrian";
        case ObjectKind::Truck: return "truck";
        case ObjectKind::Other: return "other";
    }
    throw DataError("bad object kind");
}

ObjectKind kind_from_name(const std::string& s) {
    if (s == "ego_car") return ObjectKind::EgoCar;
    if (s == "car") return ObjectKind::Car;
    if (s == "motorcycle") return ObjectKind::Motorcycle;
    if (s == "pedestrian") return ObjectKind::Pedestrian;
    if (s == "truck") return ObjectKind::Truck;
    if (s == "other") return ObjectKind::Other;
    throw DataError("unknown object kind '" + s + "'");
}

bool is_vehicle(ObjectKind k) {
    return k == ObjectKind::EgoCar || k == ObjectKind::Car || k == ObjectKind::Motorcycle ||
           k == ObjectKind::Truck;
}

namespace {

constexpr const char* kRelationNames[kNumRelations] = {
    "Near_Collision", "Super_Near", "Very_Near", "Near",       "Visible",
    "Front_Left",     "Left_Front", "Left_Rear", "Rear_Left",  "Rear_Right",
    "Right_Rear",     "Right_Front", "Front_Right", "isIn",
};

}  // namespace

std::string relation_name(RelationType r) {
    return kRelationNames[static_cast<std::size_t>(r)];
}

RelationType relation_from_name(const std::string& s) {
    for (std::size_t i = 0; i < kNumRelations; ++i)
        if (s == kRelationNames[i]) return static_cast<RelationType>(i);
    throw DataError("unknown relation type '" + s + "'");
}

bool is_distance_relation(RelationType r) {
    return static_cast<std::size_t>(r) <= static_cast<std::size_t>(RelationType::Visible);
}

bool is_directional_relation(RelationType r) {
    const auto i = static_cast<std::size_t>(r);
    return i >= static_cast<std::size_t>(RelationType::FrontLeft) &&
           i <= static_cast<std::size_t>(RelationType::FrontRight);
}

std::size_t SceneGraph::node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return i;
    throw DataError("node '" + id + "' not in scene graph");
}

const std::vector<std::string>& node_kind_vocab() {
    static const std::vector<std::string> vocab = {
        "ego_car", "car",       "motorcycle",  "pedestrian", "truck",
        "other",   kLeftLane,   kMiddleLane,   kRightLane,   kRootRoad,
    };
    return vocab;
}

std::string label_name(RiskLabel l) { return l == RiskLabel::Safe ? "safe" : "risky"; }

RiskLabel label_from_name(const std::string& s) {
    if (s == "safe") return RiskLabel::Safe;
    if (s == "risky") return RiskLabel::Risky;
    throw DataError("unknown risk label '" + s + "'");
}

// ---- homography ------------------------------------------------------

namespace {

struct EigenResult {
    std::vector<double> vec;  // eigenvector of the smallest eigenvalue
    double lambda_min = 0.0, lambda_second = 0.0, lambda_max = 0.0;
};

// Jacobi eigenvalue iteration on a symmetric n x n matrix.
EigenResult min_eigenvector(std::vector<double> a, std::size_t n) {
    std::vector<double> vec(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vec[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vec[k * n + p], vkq = vec[k * n + q];
                    vec[k * n + p] = c * vkp - s * vkq;
                    vec[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (a[i * n + i] < a[best * n + best]) best = i;
    EigenResult res;
    res.vec.resize(n);
    for (std::size_t k = 0; k < n; ++k) res.vec[k] = vec[k * n + best];
    std::vector<double> eigs(n);
    for (std::size_t i = 0; i < n; ++i) eigs[i] = a[i * n + i];
    std::sort(eigs.begin(), eigs.end());
    res.lambda_min = eigs[0];
    res.lambda_second = n > 1 ? eigs[1] : eigs[0];
    res.lambda_max = eigs[n - 1];
    return res;
}

struct NormalizeTransform {
    // Similarity transform: x' = s * (x - cx), y' = s * (y - cy).
    double s = 1.0, cx = 0.0, cy = 0.0;
};

NormalizeTransform hartley_normalize(const std::vector<std::array<double, 2>>& pts) {
    NormalizeTransform t;
    for (const auto& p : pts) {
        t.cx += p[0];
        t.cy += p[1];
    }
    t.cx /= static_cast<double>(pts.size());
    t.cy /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts)
        mean_dist += std::hypot(p[0] - t.cx, p[1] - t.cy);
    mean_dist /= static_cast<double>(pts.size());
    t.s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    return t;
}

std::array<double, 9> mat3_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) out[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return out;
}

double mat3_det(const std::array<double, 9>& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

}  // namespace

Homography estimate_homography(const std::vector<PointPair>& correspondences) {
    if (correspondences.size() < 4)
        throw GeometryError("homography estimation needs >= 4 correspondences, got " +
                            std::to_string(correspondences.size()));
    std::vector<std::array<double, 2>> src, dst;
    for (const auto& [a, b] : correspondences) {
        src.push_back(a);
        dst.push_back(b);
    }
    const NormalizeTransform ts = hartley_normalize(src);
    const NormalizeTransform td = hartley_normalize(dst);
    std::vector<double> ata(81, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double u = ts.s * (src[i][0] - ts.cx), v = ts.s * (src[i][1] - ts.cy);
        const double x = td.s * (dst[i][0] - td.cx), y = td.s * (dst[i][1] - td.cy);
        const double rows[2][9] = {
            {u, v, 1, 0, 0, 0, -x * u, -x * v, -x},
            {0, 0, 0, u, v, 1, -y * u, -y * v, -y},
        };
        for (const auto& row : rows)
            for (int p = 0; p < 9; ++p)
                for (int q = 0; q < 9; ++q) ata[p * 9 + q] += row[p] * row[q];
    }
    const EigenResult eig = min_eigenvector(std::move(ata), 9);
    // A rank-deficient system (e.g. collinear source points) has a
    // non-unique null space: two vanishing eigenvalues.
    if (eig.lambda_second <= 1e-8 * std::max(1.0, eig.lambda_max))
        throw GeometryError(
            "degenerate homography input: source points are (nearly) collinear");
    std::array<double, 9> hn;
    std::copy(eig.vec.begin(), eig.vec.end(), hn.begin());
    // Denormalize: H = Td^-1 * Hn * Ts.
    const std::array<double, 9> t_src = {ts.s, 0, -ts.s * ts.cx, 0, ts.s, -ts.s * ts.cy, 0, 0, 1};
    const std::array<double, 9> t_dst_inv = {1.0 / td.s, 0, td.cx, 0, 1.0 / td.s, td.cy, 0, 0, 1};
    std::array<double, 9> full = mat3_mul(t_dst_inv, mat3_mul(hn, t_src));
    if (std::abs(full[8]) < 1e-12)
        throw GeometryError("homography normalization failed: vanishing scale entry");
    for (auto& x : full) x /= full[full.size() - 1];
    full[8] = 1.0;
    Homography result;
    result.m = full;
    if (std::abs(mat3_det(result.m)) <= 1e-9)
        throw GeometryError("estimated homography is singular");
    return result;
}

Homography inverse(const Homography& h) {
    const auto& m = h.m;
    const double det = mat3_det(m);
    if (std::abs(det) <= 1e-9) throw GeometryError("homography not invertible");
    std::array<double, 9> inv = {
        (m[4] * m[8] - m[5] * m[7]), -(m[1] * m[8] - m[2] * m[7]), (m[1] * m[5] - m[2] * m[4]),
        -(m[3] * m[8] - m[5] * m[6]), (m[0] * m[8] - m[2] * m[6]), -(m[0] * m[5] - m[2] * m[3]),
        (m[3] * m[7] - m[4] * m[6]), -(m[0] * m[7] - m[1] * m[6]), (m[0] * m[4] - m[1] * m[3])};
    for (auto& x : inv) x /= det;
    if (std::abs(inv[8]) < 1e-12)
        throw GeometryError("inverse homography normalization failed");
    for (auto& x : inv) x /= inv[8];
    inv[8] = 1.0;
    Homography out;
    out.m = inv;
    return out;
}

std::array<double, 2> project_to_birdseye(const Homography& h, double u, double v) {
    const auto& m = h.m;
    const double w = m[6] * u + m[7] * v + m[8];
    if (std::abs(w) < 1e-12)
        throw GeometryError("projected point at infinity (w = " + std::to_string(w) + ")");
    return {(m[0] * u + m[1] * v + m[2]) / w, (m[3] * u + m[4] * v + m[5]) / w};
}

// ---- relation rules --------------------------------------------------

std::optional<RelationType> classify_distance(double d_ft) {
    if (d_ft < 0.0) throw DomainError("negative distance " + std::to_string(d_ft));
    // Tightest bucket wins; upper boundaries inclusive.
    for (std::size_t i = 0; i < kDistanceThresholdsFt.size(); ++i)
        if (d_ft <= kDistanceThresholdsFt[i]) return static_cast<RelationType>(i);
    return std::nullopt;
}

std::optional<RelationType> classify_direction(const ObjectState& src, const ObjectState& dst) {
    const double dx = dst.x_ft - src.x_ft;
    const double dy = dst.y_ft - src.y_ft;
    if (!std::isfinite(dx) || !std::isfinite(dy))
        throw DomainError("non-finite position in direction classification");
    const double d = std::hypot(dx, dy);
    if (d == 0.0) return std::nullopt;
    if (d > kNearThresholdFt) return std::nullopt;
    // Bearing in the ego frame: 0 deg = forward (+y), clockwise positive.
    double bearing = std::atan2(dx, dy) * 180.0 / M_PI;
    if (bearing < 0.0) bearing += 360.0;
    static constexpr RelationType kSectors[8] = {
        RelationType::FrontRight, RelationType::RightFront, RelationType::RightRear,
        RelationType::RearRight,  RelationType::RearLeft,   RelationType::LeftRear,
        RelationType::LeftFront,  RelationType::FrontLeft,
    };
    const auto sector = static_cast<std::size_t>(bearing / 45.0) % 8;
    return kSectors[sector];
}

std::vector<std::string> assign_lanes(const ObjectState& obj, const BuilderConfig& config) {
    if (obj.lane_hint) {
        const std::string& h = *obj.lane_hint;
        if (h == "left") return {kLeftLane};
        if (h == "middle") return {kMiddleLane};
        if (h == "right") return {kRightLane};
        throw DataError("unknown lane hint '" + h + "' for object '" + obj.id + "'");
    }
    const double b = config.lane_width_ft / 2.0;
    const double margin = config.overlap_margin_ft;
    const double x = obj.x_ft;
    if (std::abs(x) <= b - margin) return {kMiddleLane};
    if (std::abs(x + b) <= margin) return {kLeftLane, kMiddleLane};
    if (std::abs(x - b) <= margin) return {kMiddleLane, kRightLane};
    return {x < 0.0 ? kLeftLane : kRightLane};
}

SceneGraph build_scene_graph(const std::vector<ObjectState>& frame,
                             const BuilderConfig& config) {
    const ObjectState* ego = nullptr;
    std::set<std::string> ids;
    for (const auto& o : frame) {
        if (!std::isfinite(o.x_ft) || !std::isfinite(o.y_ft))
            throw DataError("non-finite coordinates for object '" + o.id + "'");
        if (!ids.insert(o.id).second)
            throw DataError("duplicate object id '" + o.id + "' in frame");
        if (o.kind == ObjectKind::EgoCar) ego = &o;
    }
    if (!ego) throw DataError("frame has no ego vehicle");
    if (std::abs(ego->x_ft) > 1e-9 || std::abs(ego->y_ft) > 1e-9)
        throw DataError("ego vehicle must sit at the origin of the ego-relative frame");

    SceneGraph g;
    g.nodes.push_back({kLeftLane, kLeftLane});
    g.nodes.push_back({kMiddleLane, kMiddleLane});
    g.nodes.push_back({kRightLane, kRightLane});
    g.nodes.push_back({kRootRoad, kRootRoad});
    std::vector<const ObjectState*> objs;
    for (const auto& o : frame) objs.push_back(&o);
    std::sort(objs.begin(), objs.end(),
              [](const ObjectState* a, const ObjectState* b) { return a->id < b->id; });
    for (const auto* o : objs) g.nodes.push_back({o->id, kind_name(o->kind)});

    const std::size_t root = 3;
    for (std::size_t lane = 0; lane < 3; ++lane)
        g.edges.push_back({lane, root, RelationType::IsIn});

    const std::size_t first_obj = 4;
    for (std::size_t i = 0; i < objs.size(); ++i) {
        if (!is_vehicle(objs[i]->kind)) continue;
        for (const auto& lane_id : assign_lanes(*objs[i], config))
            g.edges.push_back({first_obj + i, g.node_index(lane_id), RelationType::IsIn});
    }

    for (std::size_t i = 0; i < objs.size(); ++i) {
        for (std::size_t j = i + 1; j < objs.size(); ++j) {
            const double d =
                std::hypot(objs[j]->x_ft - objs[i]->x_ft, objs[j]->y_ft - objs[i]->y_ft);
            if (const auto rel = classify_distance(d)) {
                g.edges.push_back({first_obj + i, first_obj + j, *rel});
                g.edges.push_back({first_obj + j, first_obj + i, *rel});
            }
        }
    }
    for (std::size_t i = 0; i < objs.size(); ++i)
        for (std::size_t j = 0; j < objs.size(); ++j) {
            if (i == j) continue;
            if (const auto rel = classify_direction(*objs[i], *objs[j]))
                g.edges.push_back({first_obj + i, first_obj + j, *rel});
        }
    return g;
}

std::vector<SceneGraph> clip_to_graph_sequence(const ClipRecord& clip,
                                               const BuilderConfig& config) {
    if (clip.frames.empty()) throw DataError("clip '" + clip.clip_id + "' has no frames");
    std::vector<SceneGraph> out;
    out.reserve(clip.frames.size());
    for (std::size_t t = 0; t < clip.frames.size(); ++t) {
        try {
            out.push_back(build_scene_graph(clip.frames[t], config));
        } catch (const std::exception& e) {
            throw DataError("clip '" + clip.clip_id + "' frame " + std::to_string(t) + ": " +
                            e.what());
        }
    }
    return out;
}

}  // namespace sgrisk::sg
