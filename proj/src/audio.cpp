#include "marketback/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace marketback {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24;
}

std::uint16_t get_u16(const char* p) {
    return static_cast<std::uint16_t>(
        static_cast<unsigned char>(p[0]) |
        (static_cast<unsigned char>(p[1]) << 8));
}

[[noreturn]] void format_error(const std::filesystem::path& path,
                               const std::string& what) {
    throw std::runtime_error("malformed WAV file " + path.string() + ": " +
                             what);
}

}  // namespace

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
    if (clip.samples.empty()) throw std::domain_error("empty clip");
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    const std::uint32_t rate = static_cast<std::uint32_t>(clip.sample_rate);

    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, rate);
    put_u32(out, rate * 2);  // byte rate
    put_u16(out, 2);         // block align
    put_u16(out, 16);        // bits per sample
    out += "data";
    put_u32(out, data_bytes);
    for (double s : clip.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const int v = static_cast<int>(std::lround(clamped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    if (buf.size() < 44) format_error(path, "truncated header");
    if (buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0) {
        format_error(path, "missing RIFF/WAVE magic");
    }

    int sample_rate = 0;
    std::size_t data_off = 0;
    std::size_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::string id = buf.substr(pos, 4);
        const std::uint32_t len = get_u32(buf.data() + pos + 4);
        pos += 8;
        if (pos + len > buf.size()) format_error(path, "chunk overruns file");
        if (id == "fmt ") {
            if (len < 16) format_error(path, "short fmt chunk");
            if (get_u16(buf.data() + pos) != 1) {
                format_error(path, "not PCM");
            }
            if (get_u16(buf.data() + pos + 2) != 1) {
                format_error(path, "not mono");
            }
            sample_rate = static_cast<int>(get_u32(buf.data() + pos + 4));
            if (get_u16(buf.data() + pos + 14) != 16) {
                format_error(path, "not 16-bit");
            }
        } else if (id == "data") {
            data_off = pos;
            data_len = len;
        }
        pos += len + (len & 1);
    }
    if (sample_rate == 0) format_error(path, "missing fmt chunk");
    if (data_len == 0) format_error(path, "missing data chunk");

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(
            get_u16(buf.data() + data_off + 2 * i));
        clip.samples[i] = static_cast<double>(raw) / 32767.0;
    }
    if (sample_rate != 16000) {
        clip.samples = resample_linear(clip.samples, sample_rate, 16000);
        clip.sample_rate = 16000;
    }
    return clip;
}

std::vector<double> resample_linear(const std::vector<double>& samples,
                                    int from_rate, int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) {
        throw std::domain_error("sample rates must be > 0");
    }
    if (from_rate == to_rate || samples.size() < 2) return samples;
    const std::size_t n_out = static_cast<std::size_t>(std::lround(
        static_cast<double>(samples.size()) * to_rate / from_rate));
    std::vector<double> out(std::max<std::size_t>(n_out, 1));
    const double scale = static_cast<double>(samples.size() - 1) /
                         static_cast<double>(out.size() - 1 ? out.size() - 1 : 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double pos = static_cast<double>(i) * scale;
        const std::size_t lo =
            std::min(static_cast<std::size_t>(pos), samples.size() - 2);
        const double w = pos - static_cast<double>(lo);
        out[i] = samples[lo] * (1.0 - w) + samples[lo + 1] * w;
    }
    return out;
}

}  // namespace marketback
