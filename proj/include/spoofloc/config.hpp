#pragma once

#include <map>
#include <string>
#include <vector>

#include "spoofloc/augment.hpp"
#include "spoofloc/losses.hpp"
#include "spoofloc/mel.hpp"
#include "spoofloc/model.hpp"
#include "spoofloc/trainer.hpp"

namespace spoofloc {

/// Resolved configuration for a run, with per-field provenance
/// (default | file | flag). Flag overrides file overrides default.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    MelConfig mel;
    AugmentationPolicy augment;
    std::map<std::string, std::string> provenance;

    /// Field values only; provenance is bookkeeping and not compared.
    bool same_values(const RunConfig& other) const;
};

/// Known keys in registry order (the order --print-config emits).
std::vector<std::string> config_keys();

/// Parses `key = value` lines (# comments allowed), then applies
/// `key=value` flag overrides. Unknown keys and malformed values are
/// rejected by name. Pass an empty path to start from defaults.
RunConfig parse_run_config(const std::string& config_path,
                           const std::vector<std::string>& flag_overrides);

/// Fully resolved config as key = value text; re-parsing it reproduces the
/// same values.
std::string print_run_config(const RunConfig& cfg);

} // namespace spoofloc
