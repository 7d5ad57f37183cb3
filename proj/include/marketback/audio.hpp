#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace marketback {

struct AudioClip {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = 16000;
};

// 16-bit PCM mono RIFF WAV.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Reads 16-bit PCM mono; resamples to 16 kHz by linear interpolation when
// the file rate differs. Throws std::runtime_error naming the file on a
// malformed header.
AudioClip read_wav(const std::filesystem::path& path);

std::vector<double> resample_linear(const std::vector<double>& samples,
                                    int from_rate, int to_rate);

}  // namespace marketback
