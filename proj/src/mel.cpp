#include "spoofloc/mel.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "spoofloc/common.hpp"
#include "spoofloc/fft.hpp"

namespace spoofloc {
namespace {

constexpr double kPowerFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::string cache_file(const std::string& cache_dir, const std::string& clip_id,
                       const MelConfig& cfg) {
    std::ostringstream os;
    os << cache_dir << "/" << clip_id << "_" << std::hex << mel_config_hash(cfg) << ".melbin";
    return os.str();
}

} // namespace

void MelConfig::validate() const {
    if (hop <= 0 || fft_window <= 0 || hop >= fft_window) {
        fail_validation("mel config: need 0 < hop < fft_window, got hop=", hop,
                        " fft_window=", fft_window);
    }
    if (n_mels < 1) fail_validation("mel config: n_mels must be >= 1");
    if (sample_rate <= 0) fail_validation("mel config: sample_rate must be positive");
    if (!(fmin < fmax) || fmax > sample_rate / 2.0) {
        fail_validation("mel config: need fmin < fmax <= sample_rate/2, got fmin=", fmin,
                        " fmax=", fmax);
    }
}

std::size_t mel_frame_count(std::size_t n_samples, const MelConfig& cfg) {
    if (n_samples < static_cast<std::size_t>(cfg.fft_window)) {
        fail_validation("clip of ", n_samples, " samples is shorter than one analysis window (",
                        cfg.fft_window, "); pad or reject it before feature extraction");
    }
    return 1 + (n_samples - static_cast<std::size_t>(cfg.fft_window)) /
                   static_cast<std::size_t>(cfg.hop);
}

Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
    cfg.validate();
    const int n_bins = cfg.fft_window / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);

    std::vector<double> edges(cfg.n_mels + 2);
    for (int m = 0; m < cfg.n_mels + 2; ++m) {
        edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    }

    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double fk =
                static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_window);
            double w = 0.0;
            if (fk > f0 && fk < f1) {
                w = (fk - f0) / (f1 - f0);
            } else if (fk >= f1 && fk < f2) {
                w = (f2 - fk) / (f2 - f1);
            }
            fb(m, k) = w;
        }
    }
    return fb;
}

MelFrames extract_mel(const AudioClip& clip, const MelConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate != cfg.sample_rate) {
        fail_validation("clip '", clip.id, "' has sample rate ", clip.sample_rate,
                        ", feature config expects ", cfg.sample_rate);
    }
    const std::size_t n_frames = mel_frame_count(clip.samples.size(), cfg);
    const int win = cfg.fft_window;
    const int n_bins = win / 2 + 1;

    std::vector<double> window(win);
    for (int n = 0; n < win; ++n) {
        window[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / win);
    }

    const Eigen::MatrixXd fb = mel_filterbank(cfg);

    MelFrames mel;
    mel.clip_id = clip.id;
    mel.values.resize(static_cast<Eigen::Index>(n_frames), cfg.n_mels);

    std::vector<double> frame(win);
    Eigen::VectorXd power(n_bins);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const std::size_t start = i * static_cast<std::size_t>(cfg.hop);
        for (int n = 0; n < win; ++n) {
            frame[n] = clip.samples[start + n] * window[n];
        }
        const auto spec = real_fft(frame);
        for (int k = 0; k < n_bins; ++k) power(k) = std::norm(spec[k]);
        Eigen::VectorXd mel_power = fb * power;
        for (int m = 0; m < cfg.n_mels; ++m) {
            mel.values(static_cast<Eigen::Index>(i), m) =
                std::log(std::max(mel_power(m), kPowerFloor));
        }
    }
    return mel;
}

Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& values) {
    if (values.rows() == 0) fail_validation("normalize_features: empty feature matrix");
    Eigen::MatrixXd out(values.rows(), values.cols());
    const double n = static_cast<double>(values.rows());
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double mean = values.col(c).mean();
        const double var = (values.col(c).array() - mean).square().sum() / n;
        const double inv_std = 1.0 / std::sqrt(var + 1e-8);
        out.col(c) = (values.col(c).array() - mean) * inv_std;
    }
    return out;
}

std::uint64_t mel_config_hash(const MelConfig& cfg) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mel|%d|%d|%d|%d|%.17g|%.17g", cfg.fft_window, cfg.hop,
                  cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax);
    return fnv1a(buf);
}

void save_mel_cache(const std::string& cache_dir, const MelFrames& mel,
                    const MelConfig& cfg) {
    std::filesystem::create_directories(cache_dir);
    const std::string path = cache_file(cache_dir, mel.clip_id, cfg);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_runtime("cannot write feature cache file: ", path);
    const char magic[8] = {'S', 'L', 'M', 'E', 'L', '0', '0', '1'};
    os.write(magic, 8);
    const std::uint64_t hash = mel_config_hash(cfg);
    const std::uint64_t rows = mel.values.rows();
    const std::uint64_t cols = mel.values.cols();
    os.write(reinterpret_cast<const char*>(&hash), 8);
    os.write(reinterpret_cast<const char*>(&rows), 8);
    os.write(reinterpret_cast<const char*>(&cols), 8);
    for (Eigen::Index r = 0; r < mel.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < mel.values.cols(); ++c) {
            const double v = mel.values(r, c);
            os.write(reinterpret_cast<const char*>(&v), 8);
        }
    }
    if (!os) fail_runtime("failed while writing ", path);
}

std::optional<MelFrames> load_mel_cache(const std::string& cache_dir,
                                        const std::string& clip_id, const MelConfig& cfg) {
    const std::string path = cache_file(cache_dir, clip_id, cfg);
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "SLMEL001", 8) != 0) {
        fail_validation(path, ": not a feature cache file");
    }
    std::uint64_t hash = 0, rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&hash), 8);
    is.read(reinterpret_cast<char*>(&rows), 8);
    is.read(reinterpret_cast<char*>(&cols), 8);
    if (hash != mel_config_hash(cfg)) return std::nullopt;
    MelFrames mel;
    mel.clip_id = clip_id;
    mel.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < mel.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < mel.values.cols(); ++c) {
            double v;
            is.read(reinterpret_cast<char*>(&v), 8);
            mel.values(r, c) = v;
        }
    }
    if (!is) fail_validation(path, ": truncated feature cache file");
    return mel;
}

} // namespace spoofloc
