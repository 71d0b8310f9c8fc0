#include "nf3d/model_io.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "binary_io.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {
constexpr char kMagic[4] = {'N', 'F', '3', 'D'};
} // namespace

std::vector<std::uint8_t> encode_model(const FaceModel& model) {
    const FlatWeights flat = flatten(model);
    std::vector<std::uint8_t> out;
    out.reserve(kModelHeaderBytes + model_payload_bytes(flat.hidden_count));
    out.insert(out.end(), kMagic, kMagic + 4);
    detail::put_u16(out, kModelFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(flat.hidden_count));
    out.insert(out.end(), 6, std::uint8_t{0});
    for (Eigen::Index i = 0; i < flat.values.size(); ++i) {
        detail::put_f32(out, static_cast<float>(flat.values[i]));
    }
    return out;
}

FaceModel decode_model(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader in(bytes, "model file");
    if (std::memcmp(in.take(4), kMagic, 4) != 0) {
        throw DataError("model file: bad magic, not an NF3D model");
    }
    const std::uint16_t version = in.u16();
    if (version != kModelFormatVersion) {
        throw DataError("model file: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t m = in.u32();
    if (m == 0) {
        throw DataError("model file: hidden count is zero");
    }
    in.take(6);

    FlatWeights flat;
    flat.hidden_count = static_cast<Eigen::Index>(m);
    flat.values.resize(4 * flat.hidden_count + 1);
    for (Eigen::Index i = 0; i < flat.values.size(); ++i) {
        const float v = in.f32();
        if (!std::isfinite(v)) {
            throw DataError("model file: non-finite weight at index " + std::to_string(i));
        }
        flat.values[i] = static_cast<double>(v);
    }
    in.expect_exhausted();
    return unflatten(flat);
}

void serialize(const FaceModel& model, const std::filesystem::path& path) {
    detail::write_file(encode_model(model), path, "model file");
}

FaceModel deserialize(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path, "model file");
    try {
        return decode_model(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

} // namespace nf3d
