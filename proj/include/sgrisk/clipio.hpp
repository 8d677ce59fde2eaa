#pragma once

#include <string>
#include <vector>

#include "sgrisk/scenegraph.hpp"

namespace sgrisk::sg {

// Clip dataset files are UTF-8 JSON lines, one ClipRecord per line.
std::string clip_to_json_line(const ClipRecord& clip);
ClipRecord clip_from_json_line(const std::string& line);

std::vector<ClipRecord> load_clips(const std::string& path);
void save_clips(const std::string& path, const std::vector<ClipRecord>& clips);

// Sidecar homography file: 9 whitespace-separated numbers, row-major.
Homography load_homography_file(const std::string& path);
void save_homography_file(const std::string& path, const Homography& h);

// Image-space detections ingestion: JSON lines with per-frame boxes
// {id, kind, u, v}; the converter projects through the homography,
// re-centers on the ego vehicle, and emits regular ClipRecords.
std::vector<ClipRecord> load_detections(const std::string& path, const Homography& h);

// Graph-sequence cache: one line per clip {clip_id, label, graphs}.
struct GraphClip {
    std::string clip_id;
    RiskLabel label = RiskLabel::Safe;
    std::vector<SceneGraph> graphs;
};

std::string graph_clip_to_json_line(const GraphClip& gc);
GraphClip graph_clip_from_json_line(const std::string& line);
std::vector<GraphClip> load_graph_clips(const std::string& path);
void save_graph_clips(const std::string& path, const std::vector<GraphClip>& gcs);

// Reads either a clip file or a graph cache, producing graph sequences
// ready for the model. Clip files are converted with `config`.
std::vector<GraphClip> load_graphs_any(const std::string& path, const BuilderConfig& config);

}  // namespace sgrisk::sg
