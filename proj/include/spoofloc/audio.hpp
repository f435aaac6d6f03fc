#pragma once

#include <string>
#include <vector>

#include "spoofloc/annotations.hpp"

namespace spoofloc {

/// Mono waveform, amplitudes nominally in [-1, 1].
struct AudioClip {
    std::string id;
    std::vector<double> samples;
    int sample_rate = kSampleRate;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
    bool operator==(const AudioClip&) const = default;
};

/// Reads a mono 16-bit PCM WAV file. Rates other than `target_rate` are
/// resampled at ingestion; clips shorter than one analysis window are
/// rejected.
AudioClip read_wav(const std::string& path, const std::string& clip_id,
                   int target_rate = kSampleRate);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::string& path, const AudioClip& clip);

/// Linear-interpolation resampler.
std::vector<double> resample(const std::vector<double>& samples, int from_rate,
                             int to_rate);

/// Mean power (mean of squared samples) over [begin, end).
double mean_power(const std::vector<double>& samples, std::size_t begin,
                  std::size_t end);

/// Converts a time interval in seconds to a sample index range, clamped to
/// the clip length.
std::pair<std::size_t, std::size_t> sample_range(const AudioClip& clip,
                                                 double start_s, double end_s);

} // namespace spoofloc
