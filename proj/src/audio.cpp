#include "spoofloc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

} // namespace

AudioClip read_wav(const std::string& path, const std::string& clip_id, int target_rate) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_runtime("cannot open audio file: ", path);

    char tag[5] = {0};
    is.read(tag, 4);
    if (std::strncmp(tag, "RIFF", 4) != 0) fail_validation(path, ": not a RIFF file");
    read_u32(is); // riff size
    is.read(tag, 4);
    if (std::strncmp(tag, "WAVE", 4) != 0) fail_validation(path, ": not a WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<double> samples;
    bool have_fmt = false, have_data = false;

    while (is && !have_data) {
        is.read(tag, 4);
        if (!is) break;
        const std::uint32_t chunk_size = read_u32(is);
        if (std::strncmp(tag, "fmt ", 4) == 0) {
            format = read_u16(is);
            channels = read_u16(is);
            rate = read_u32(is);
            read_u32(is); // byte rate
            read_u16(is); // block align
            bits = read_u16(is);
            if (chunk_size > 16) is.ignore(chunk_size - 16);
            have_fmt = true;
        } else if (std::strncmp(tag, "data", 4) == 0) {
            if (!have_fmt) fail_validation(path, ": data chunk before fmt chunk");
            if (format != 1) fail_validation(path, ": only PCM WAV is supported");
            if (channels != 1) {
                fail_validation(path, ": expected mono audio, got ", channels, " channels");
            }
            if (bits != 16) fail_validation(path, ": expected 16-bit PCM, got ", bits, " bits");
            const std::size_t n = chunk_size / 2;
            samples.resize(n);
            std::vector<char> raw(chunk_size);
            is.read(raw.data(), chunk_size);
            if (!is) fail_validation(path, ": truncated data chunk");
            for (std::size_t i = 0; i < n; ++i) {
                std::int16_t v;
                std::memcpy(&v, raw.data() + 2 * i, 2);
                samples[i] = static_cast<double>(v) / 32767.0;
            }
            have_data = true;
        } else {
            is.ignore(chunk_size + (chunk_size & 1));
        }
    }
    if (!have_data) fail_validation(path, ": no data chunk found");

    AudioClip clip;
    clip.id = clip_id;
    clip.sample_rate = target_rate;
    clip.samples = (static_cast<int>(rate) == target_rate)
                       ? std::move(samples)
                       : resample(samples, static_cast<int>(rate), target_rate);
    if (clip.samples.size() < static_cast<std::size_t>(kWindowSamples)) {
        fail_validation(path, ": clip too short (", clip.samples.size(), " samples at ",
                        target_rate, " Hz, need at least ", kWindowSamples, ")");
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_runtime("cannot write audio file: ", path);

    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    write_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    write_u32(os, 16);
    write_u16(os, 1);
    write_u16(os, 1);
    write_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
    write_u32(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    write_u16(os, 2);
    write_u16(os, 16);
    os.write("data", 4);
    write_u32(os, data_bytes);
    for (double s : clip.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lrint(clipped * 32767.0));
        write_u16(os, static_cast<std::uint16_t>(v));
    }
    if (!os) fail_runtime("failed while writing ", path);
}

std::vector<double> resample(const std::vector<double>& samples, int from_rate,
                             int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) fail_validation("resample: rates must be positive");
    if (from_rate == to_rate || samples.empty()) return samples;
    const double ratio = static_cast<double>(from_rate) / to_rate;
    const auto n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(samples.size() - 1) / ratio)) + 1;
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const auto i0 = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i0);
        const double a = samples[i0];
        const double b = (i0 + 1 < samples.size()) ? samples[i0 + 1] : samples[i0];
        out[i] = a + frac * (b - a);
    }
    return out;
}

double mean_power(const std::vector<double>& samples, std::size_t begin, std::size_t end) {
    if (begin >= end || end > samples.size()) {
        fail_validation("mean_power: bad range [", begin, ", ", end, ") for ",
                        samples.size(), " samples");
    }
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += samples[i] * samples[i];
    return acc / static_cast<double>(end - begin);
}

std::pair<std::size_t, std::size_t> sample_range(const AudioClip& clip, double start_s,
                                                 double end_s) {
    if (!(start_s < end_s)) {
        fail_validation("empty time interval [", start_s, ", ", end_s, ")");
    }
    if (start_s < -kTilingEps || end_s > clip.duration_s() + kTilingEps) {
        fail_validation("interval [", start_s, ", ", end_s, ") outside clip '", clip.id,
                        "' of duration ", clip.duration_s(), "s");
    }
    const auto lo = static_cast<std::size_t>(
        std::lrint(std::max(0.0, start_s) * clip.sample_rate));
    auto hi = static_cast<std::size_t>(
        std::lrint(std::min(end_s, clip.duration_s()) * clip.sample_rate));
    hi = std::min(hi, clip.samples.size());
    return {lo, hi};
}

} // namespace spoofloc
