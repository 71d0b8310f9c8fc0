#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nf3d/face_model.hpp"

namespace nf3d {

/// Binary model format: magic "NF3D", version u16 LE, hidden count u32 LE,
/// 6 reserved zero bytes, then 4M+1 little-endian IEEE float32 values in
/// flat layout order.
inline constexpr std::uint16_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 16;

/// Payload size in bytes for a model with M hidden units.
inline std::size_t model_payload_bytes(Eigen::Index hidden_count) {
    return static_cast<std::size_t>(4 * hidden_count + 1) * 4;
}

std::vector<std::uint8_t> encode_model(const FaceModel& model);
FaceModel decode_model(const std::vector<std::uint8_t>& bytes);

void serialize(const FaceModel& model, const std::filesystem::path& path);
FaceModel deserialize(const std::filesystem::path& path);

} // namespace nf3d
