#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// On-disk layout: magic + version header, a key-value config blob (preserved
// verbatim so re-saving is byte-identical), a named tensor table with
// absolute payload offsets, then the raw little-endian payloads in table
// order.
struct Checkpoint {
    std::uint32_t format_version = kCheckpointFormatVersion;
    std::string config_text;
    std::vector<std::pair<std::string, TensorData>> tensors;

    const TensorData* find(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return &t;
        }
        return nullptr;
    }
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pathvit
