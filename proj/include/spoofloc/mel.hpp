#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spoofloc/audio.hpp"

namespace spoofloc {

struct MelConfig {
    int fft_window = kWindowSamples;
    int hop = kHopSamples;
    int n_mels = 80;
    int sample_rate = kSampleRate;
    double fmin = 0.0;
    double fmax = 8000.0;

    void validate() const;
    bool operator==(const MelConfig&) const = default;
};

/// Log-mel features on the hop grid: natural log of mel-filtered power,
/// clamped at 1e-10 before the log. Frames lie fully inside the signal (no
/// center padding), so n_frames == 1 + floor((len - fft_window) / hop).
struct MelFrames {
    std::string clip_id;
    Eigen::MatrixXd values; // n_frames x n_mels

    std::size_t n_frames() const { return static_cast<std::size_t>(values.rows()); }
};

std::size_t mel_frame_count(std::size_t n_samples, const MelConfig& cfg);

/// Triangular mel filterbank, n_mels x (fft_window/2 + 1).
Eigen::MatrixXd mel_filterbank(const MelConfig& cfg);

MelFrames extract_mel(const AudioClip& clip, const MelConfig& cfg);

/// Per-utterance normalization: zero mean, unit variance per mel bin over
/// the frame axis. Applied between extraction and the model.
Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& values);

std::uint64_t mel_config_hash(const MelConfig& cfg);

/// On-disk feature cache, one binary file per (clip_id, config hash).
/// A cache hit is bit-identical to recomputation.
void save_mel_cache(const std::string& cache_dir, const MelFrames& mel,
                    const MelConfig& cfg);
std::optional<MelFrames> load_mel_cache(const std::string& cache_dir,
                                        const std::string& clip_id, const MelConfig& cfg);

} // namespace spoofloc
