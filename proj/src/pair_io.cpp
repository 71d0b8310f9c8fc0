#include <cmath>
#include <cstring>
#include <string>

#include "binary_io.hpp"
#include "nf3d/siamese.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {

constexpr char kPairsMagic[4] = {'N', 'P', 'R', 'S'};
constexpr std::uint16_t kPairsFormatVersion = 1;

void put_vector(std::vector<std::uint8_t>& out, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        detail::put_f32(out, static_cast<float>(v[i]));
    }
}

Eigen::VectorXd take_vector(detail::ByteReader& in, Eigen::Index dim) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const float raw = in.f32();
        if (!std::isfinite(raw)) {
            throw DataError("pairs file: non-finite vector entry");
        }
        v[i] = static_cast<double>(raw);
    }
    return v;
}

} // namespace

void save_pairs(const std::vector<LabeledPair>& pairs, const std::filesystem::path& path) {
    if (pairs.empty()) throw DataError("pairs file: refusing to write an empty pair set");
    const Eigen::Index dim = pairs.front().a.values.size();
    for (const auto& pair : pairs) {
        if (pair.a.values.size() != dim || pair.b.values.size() != dim) {
            throw DataError("pairs file: pairs disagree on vector dimension");
        }
        if (pair.label != 0 && pair.label != 1) {
            throw DataError("pairs file: pair label must be 0 or 1");
        }
    }

    std::vector<std::uint8_t> out;
    out.reserve(16 + 8 + pairs.size() * (1 + 8 * static_cast<std::size_t>(dim)));
    out.insert(out.end(), kPairsMagic, kPairsMagic + 4);
    detail::put_u16(out, kPairsFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(dim));
    out.insert(out.end(), 6, std::uint8_t{0});
    detail::put_u64(out, pairs.size());
    for (const auto& pair : pairs) {
        out.push_back(static_cast<std::uint8_t>(pair.label));
        put_vector(out, pair.a.values);
        put_vector(out, pair.b.values);
    }
    detail::write_file(out, path, "pairs file");
}

std::vector<LabeledPair> load_pairs(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path, "pairs file");
    detail::ByteReader in(bytes, "pairs file");
    if (std::memcmp(in.take(4), kPairsMagic, 4) != 0) {
        throw DataError("pairs file: bad magic, not an NPRS pair set: " + path.string());
    }
    const std::uint16_t version = in.u16();
    if (version != kPairsFormatVersion) {
        throw DataError("pairs file: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t dim = in.u32();
    if (dim < 5 || dim % 4 != 1) {
        throw DataError("pairs file: dimension " + std::to_string(dim) +
                        " is not 4M+1 for any M >= 1");
    }
    in.take(6);
    const std::uint64_t count = in.u64();
    if (count == 0) throw DataError("pairs file: empty pair set");

    const auto hidden_count = static_cast<Eigen::Index>((dim - 1) / 4);
    std::vector<LabeledPair> pairs;
    pairs.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        LabeledPair pair;
        const std::uint8_t label = in.u8();
        if (label > 1) {
            throw DataError("pairs file: pair label must be 0 or 1");
        }
        pair.label = label;
        pair.a.hidden_count = hidden_count;
        pair.a.values = take_vector(in, static_cast<Eigen::Index>(dim));
        pair.b.hidden_count = hidden_count;
        pair.b.values = take_vector(in, static_cast<Eigen::Index>(dim));
        pairs.push_back(std::move(pair));
    }
    in.expect_exhausted();
    return pairs;
}

} // namespace nf3d
