#pragma once

#include <string>
#include <vector>

#include "spoofloc/annotations.hpp"

namespace spoofloc {

struct ManifestEntry {
    std::string clip_id;
    std::string audio_path;
    Annotations annotations;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    bool operator==(const DatasetManifest&) const = default;
};

/// Loads a line-delimited manifest. Malformed records report their line
/// number; duplicate clip ids and broken tilings are rejected. With
/// `check_audio` set, all referenced audio paths must exist (missing ones
/// are listed in the error).
DatasetManifest load_manifest(const std::string& path, bool check_audio = true);

void save_manifest(const DatasetManifest& manifest, const std::string& path);

void save_hypotheses(const std::vector<ManipulationHypothesis>& hypotheses,
                     const std::string& path);

std::vector<ManipulationHypothesis> load_hypotheses(const std::string& path);

} // namespace spoofloc
