#include "spoofloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "spoofloc/augment.hpp"
#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

// Fixed pitch comb shared by the whole corpus (A2 pentatonic-ish). Pitch
// shifts and spectral warps move energy off this comb, which is what makes
// manipulated regions identifiable.
constexpr double kCombHz[] = {110.0, 146.83, 196.0, 246.94, 329.63};
constexpr std::size_t kCombSize = sizeof(kCombHz) / sizeof(kCombHz[0]);

constexpr double kMinRegionGap = 0.10; // seconds between manipulated regions

double snap_to_hop(double t) {
    return std::round(t / kHopSeconds) * kHopSeconds;
}

AudioClip tone_mixture_base(const std::string& id, double duration_s, Rng& rng) {
    AudioClip clip;
    clip.id = id;
    clip.samples.assign(static_cast<std::size_t>(duration_s * kSampleRate), 0.0);

    const int n_tones = 2 + static_cast<int>(rng.below(2));
    for (int t = 0; t < n_tones; ++t) {
        const double f0 = kCombHz[rng.below(kCombSize)];
        const int n_harm = 2 + static_cast<int>(rng.below(3));
        const double env_rate = rng.uniform(0.3, 1.2);   // Hz
        const double env_phase = rng.uniform(0.0, 2.0 * M_PI);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (int h = 1; h <= n_harm; ++h) {
            const double f = f0 * h;
            if (f > 4000.0) break;
            const double amp = 0.35 / (n_tones * h);
            for (std::size_t i = 0; i < clip.samples.size(); ++i) {
                const double time = static_cast<double>(i) / kSampleRate;
                const double env =
                    0.75 + 0.25 * std::sin(2.0 * M_PI * env_rate * time + env_phase);
                clip.samples[i] +=
                    amp * env * std::sin(2.0 * M_PI * f * time + phase * h);
            }
        }
    }
    return clip;
}

AudioClip noise_shaped_base(const std::string& id, double duration_s, Rng& rng) {
    AudioClip clip;
    clip.id = id;
    clip.samples.resize(static_cast<std::size_t>(duration_s * kSampleRate));
    // One-pole lowpass over white noise with a slowly moving cutoff.
    const double base_alpha = rng.uniform(0.02, 0.2);
    const double wobble = rng.uniform(0.2, 1.0);
    double state = 0.0;
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double time = static_cast<double>(i) / kSampleRate;
        const double alpha =
            std::clamp(base_alpha * (1.0 + 0.5 * std::sin(2.0 * M_PI * wobble * time)),
                       0.005, 0.5);
        state += alpha * (rng.normal() - state);
        clip.samples[i] = 0.8 * state;
    }
    // Normalize to a steady RMS so SNR draws behave consistently.
    const double power = mean_power(clip.samples, 0, clip.samples.size());
    const double scale = 0.2 / std::sqrt(std::max(power, 1e-12));
    for (double& s : clip.samples) s *= scale;
    return clip;
}

std::vector<AudioClip> load_user_bases(const std::string& dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".wav") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) fail_validation("user wav directory '", dir, "' has no .wav files");
    std::vector<AudioClip> bases;
    for (const auto& p : paths) bases.push_back(read_wav(p.string(), p.stem().string()));
    return bases;
}

AudioClip user_base(const std::vector<AudioClip>& bases, const std::string& id,
                    double duration_s, Rng& rng) {
    const AudioClip& src = bases[rng.below(bases.size())];
    const auto want = static_cast<std::size_t>(duration_s * kSampleRate);
    AudioClip clip;
    clip.id = id;
    clip.samples.resize(want);
    const std::size_t offset =
        src.samples.size() > want ? rng.below(src.samples.size() - want + 1) : 0;
    for (std::size_t i = 0; i < want; ++i) {
        clip.samples[i] = src.samples[(offset + i) % src.samples.size()];
    }
    return clip;
}

// Non-overlapping manipulated regions totalling close to `fake_fraction` of
// the duration, snapped to the hop grid.
std::vector<std::pair<double, double>> draw_regions(double duration_s, double fake_fraction,
                                                    double short_region_prob, Rng& rng) {
    std::vector<std::pair<double, double>> regions;
    double want = fake_fraction * duration_s;
    double cursor = snap_to_hop(rng.uniform(0.05, 0.2));
    while (want >= 0.08 && cursor + 0.08 < duration_s - 0.05) {
        double len;
        if (rng.bernoulli(short_region_prob)) {
            len = rng.uniform(0.08, 0.15);
        } else {
            len = rng.uniform(0.15, std::max(0.2, std::min(want, 0.45 * duration_s)));
        }
        len = snap_to_hop(std::min(len, duration_s - 0.05 - cursor));
        if (len < 0.08) break;
        regions.emplace_back(cursor, cursor + len);
        want -= len;
        cursor = snap_to_hop(cursor + len + kMinRegionGap +
                             rng.uniform(0.0, 0.3 * duration_s));
    }
    return regions;
}

WaveExample manipulate_region(const WaveExample& example, double start_s, double end_s,
                              const SynthSpec& spec, Rng& rng) {
    const bool short_region = (end_s - start_s) * kSampleRate < 2048.0 + 1.0;
    // Pitch shifts need a few phase-vocoder frames; short regions fall back
    // to the other transforms.
    const int kind = short_region ? static_cast<int>(rng.below(2))
                                  : static_cast<int>(rng.below(3));
    if (kind == 0) {
        const double snr = rng.uniform(spec.gaussian_snr_db_range.first,
                                       spec.gaussian_snr_db_range.second);
        return aug_gaussian_segment(example, start_s, end_s, snr, rng,
                                    spec.gaussian_snr_db_range.second + 1e-9);
    }
    if (kind == 1) {
        const double factor = rng.bernoulli(0.5) ? rng.uniform(0.90, 0.94)
                                                 : rng.uniform(1.06, 1.10);
        const SpectralWarpTransformer warp(factor);
        return aug_segment_replace(example, warp, start_s, end_s);
    }
    const double mag = rng.uniform(2.0, 4.0);
    return aug_pitch_shift_segment(example, start_s, end_s, rng.bernoulli(0.5) ? mag : -mag);
}

} // namespace

void SynthSpec::validate() const {
    if (n_clips < 1) fail_validation("synth spec: n_clips must be >= 1");
    if (clip_duration_s < 0.5) {
        fail_validation("synth spec: clip_duration_s must be at least 0.5, got ",
                        clip_duration_s);
    }
    if (fake_fraction_range.first < 0.0 || fake_fraction_range.second > 1.0 ||
        fake_fraction_range.first > fake_fraction_range.second) {
        fail_validation("synth spec: fake_fraction_range must be an interval inside [0,1]");
    }
    if (source == Source::kUserWavs && user_wav_dir.empty()) {
        fail_validation("synth spec: user_wav_dir required for the USER_WAVS source");
    }
    if (gaussian_snr_db_range.first <= 0.0 ||
        gaussian_snr_db_range.first > gaussian_snr_db_range.second) {
        fail_validation("synth spec: bad gaussian_snr_db_range");
    }
    if (short_region_prob < 0.0 || short_region_prob > 1.0) {
        fail_validation("synth spec: short_region_prob must be in [0,1]");
    }
}

DatasetManifest synth_generate(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        fail_runtime("cannot create output directory: ", out_dir);
    }
    {
        // Probe writability up front.
        const std::string probe = out_dir + "/.write_probe";
        std::ofstream os(probe);
        if (!os) fail_runtime("output directory is not writable: ", out_dir);
        os.close();
        std::filesystem::remove(probe);
    }

    std::vector<AudioClip> user_bases;
    if (spec.source == SynthSpec::Source::kUserWavs) {
        user_bases = load_user_bases(spec.user_wav_dir);
    }

    const bool all_real = spec.fake_fraction_range.second <= 0.0;
    const bool all_fake = spec.fake_fraction_range.first >= 1.0;

    Rng root(spec.seed);
    DatasetManifest manifest;
    for (int idx = 0; idx < spec.n_clips; ++idx) {
        Rng rng = root.fork(static_cast<std::uint64_t>(idx));
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d", idx);

        const double duration =
            snap_to_hop(spec.clip_duration_s * rng.uniform(0.85, 1.15));
        WaveExample example;
        switch (spec.source) {
            case SynthSpec::Source::kToneMixture:
                example.clip = tone_mixture_base(name, duration, rng);
                break;
            case SynthSpec::Source::kNoiseShaped:
                example.clip = noise_shaped_base(name, duration, rng);
                break;
            case SynthSpec::Source::kUserWavs:
                example.clip = user_base(user_bases, name, duration, rng);
                break;
        }
        example.annotations = {{0.0, example.clip.duration_s(), Label::kReal}};

        // Composition: 10% fully real, 10% fully fake, the rest partial.
        enum class Kind { kReal, kFake, kPartial } kind = Kind::kPartial;
        if (all_real) {
            kind = Kind::kReal;
        } else if (all_fake) {
            kind = Kind::kFake;
        } else {
            const double u = rng.uniform();
            if (u < 0.1) kind = Kind::kReal;
            else if (u < 0.2) kind = Kind::kFake;
        }

        if (kind == Kind::kFake) {
            example = manipulate_region(example, 0.0, example.clip.duration_s(), spec, rng);
        } else if (kind == Kind::kPartial) {
            const double fraction = rng.uniform(spec.fake_fraction_range.first,
                                                spec.fake_fraction_range.second);
            for (const auto& [start, end] :
                 draw_regions(example.clip.duration_s(), fraction, spec.short_region_prob,
                              rng)) {
                example = manipulate_region(example, start, end, spec, rng);
            }
        }

        const std::string wav_path = cat(out_dir, "/", name, ".wav");
        write_wav(wav_path, example.clip);
        manifest.entries.push_back({name, wav_path, merge_adjacent(example.annotations)});
    }
    save_manifest(manifest, out_dir + "/manifest.jsonl");
    return manifest;
}

CorpusStats corpus_stats(const DatasetManifest& manifest) {
    CorpusStats stats;
    stats.n_clips = manifest.entries.size();
    double fraction_acc = 0.0;
    for (const ManifestEntry& e : manifest.entries) {
        const double span = tiling_span_s(e.annotations);
        double fake = 0.0;
        for (const SegmentAnnotation& a : e.annotations) {
            if (a.label == Label::kFake) fake += a.duration_s();
        }
        stats.total_duration_s += span;
        fraction_acc += fake / span;
        if (fake <= 0.0) ++stats.n_fully_real;
        else if (fake >= span - kTilingEps) ++stats.n_fully_fake;
        else ++stats.n_partial;
    }
    if (stats.n_clips > 0) {
        stats.mean_fake_fraction = fraction_acc / static_cast<double>(stats.n_clips);
    }
    return stats;
}

std::string stats_to_text(const CorpusStats& stats) {
    std::ostringstream os;
    os << "clips: " << stats.n_clips << "\n"
       << "fully_real: " << stats.n_fully_real << "\n"
       << "fully_fake: " << stats.n_fully_fake << "\n"
       << "partial: " << stats.n_partial << "\n"
       << "total_duration_s: " << stats.total_duration_s << "\n"
       << "mean_fake_fraction: " << stats.mean_fake_fraction << "\n";
    return os.str();
}

} // namespace spoofloc
