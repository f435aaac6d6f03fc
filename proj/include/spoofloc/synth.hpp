#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "spoofloc/manifest.hpp"

namespace spoofloc {

/// Recipe for a deterministic desk-scale partially-fake corpus. Base signals
/// carry no external data dependency; manipulated regions come from the
/// augmentation transforms, so ground truth is exact by construction.
struct SynthSpec {
    int n_clips = 50;
    double clip_duration_s = 1.5; // nominal; clips vary +-15% deterministically
    std::pair<double, double> fake_fraction_range = {0.2, 0.4};
    enum class Source { kToneMixture, kNoiseShaped, kUserWavs } source = Source::kToneMixture;
    std::string user_wav_dir; // for kUserWavs
    std::uint64_t seed = 0;

    // Manipulation strength. Higher SNR and shorter regions make the
    // benchmark harder.
    std::pair<double, double> gaussian_snr_db_range = {3.0, 12.0};
    double short_region_prob = 0.25; // regions of 0.08-0.15 s (noise/warp only)

    void validate() const;
};

/// Generates WAV files plus a manifest under `out_dir` (manifest saved as
/// out_dir/manifest.jsonl). At least 10% of clips are fully REAL and 10%
/// fully FAKE whenever the fake-fraction range permits both.
DatasetManifest synth_generate(const SynthSpec& spec, const std::string& out_dir);

struct CorpusStats {
    std::size_t n_clips = 0;
    std::size_t n_fully_real = 0;
    std::size_t n_fully_fake = 0;
    std::size_t n_partial = 0;
    double total_duration_s = 0.0;
    double mean_fake_fraction = 0.0;
};

CorpusStats corpus_stats(const DatasetManifest& manifest);

std::string stats_to_text(const CorpusStats& stats);

} // namespace spoofloc
