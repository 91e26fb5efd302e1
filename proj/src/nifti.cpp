// Single-file NIfTI-1 subset: 348-byte header, float32 data at offset 352,
// little-endian, orientation in srow_x/y/z with sform_code = 1.

#include <Eigen/SVD>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "srt2/volgrid.hpp"

namespace srt2 {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;
constexpr std::int16_t kFloat32 = 16;

constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;

template <typename T>
void put(std::vector<char>& buf, std::size_t off, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    std::memcpy(buf.data() + off, bytes.data(), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t off) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), buf.data() + off, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& what) {
    throw FormatError(path.string() + ": " + what);
}

}  // namespace

void write_volume(const Volume3D& vol, const std::filesystem::path& path) {
    const Grid3D& g = vol.grid();
    std::vector<char> buf(kVoxOffset + 4 * std::size_t(vol.size()), 0);

    put<std::int32_t>(buf, 0, std::int32_t(kHeaderSize));
    put<std::int16_t>(buf, kOffDim, 3);
    for (int a = 0; a < 3; ++a) put<std::int16_t>(buf, kOffDim + 2 * (a + 1), std::int16_t(g.dims[a]));
    put<std::int16_t>(buf, kOffDatatype, kFloat32);
    put<std::int16_t>(buf, kOffBitpix, 32);
    for (int a = 0; a < 3; ++a) put<float>(buf, kOffPixdim + 4 * (a + 1), float(g.spacing[a]));
    put<float>(buf, kOffVoxOffset, float(kVoxOffset));
    put<float>(buf, kOffSclSlope, 1.0f);
    put<std::int16_t>(buf, kOffSformCode, 1);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            put<float>(buf, kOffSrow + 16 * r + 4 * c, float(g.axes(r, c) * g.spacing[c]));
        put<float>(buf, kOffSrow + 16 * r + 12, float(g.origin[r]));
    }
    std::memcpy(buf.data() + kOffMagic, "n+1\0", 4);

    for (Index i = 0; i < vol.size(); ++i)
        put<float>(buf, kVoxOffset + 4 * std::size_t(i), float(vol.data()[i]));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Volume3D read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    std::vector<char> head(kVoxOffset, 0);
    in.read(head.data(), std::streamsize(kHeaderSize));
    if (std::size_t(in.gcount()) != kHeaderSize) bad(path, "truncated header");

    if (get<std::int32_t>(head, 0) != std::int32_t(kHeaderSize)) bad(path, "sizeof_hdr is not 348");
    if (std::memcmp(head.data() + kOffMagic, "n+1\0", 4) != 0) bad(path, "magic is not \"n+1\"");
    const auto ndim = get<std::int16_t>(head, kOffDim);
    if (ndim != 3) bad(path, "dim[0] = " + std::to_string(ndim) + ", expected 3");
    const auto datatype = get<std::int16_t>(head, kOffDatatype);
    if (datatype != kFloat32) bad(path, "datatype = " + std::to_string(datatype) + ", expected 16 (float32)");
    if (get<std::int16_t>(head, kOffBitpix) != 32) bad(path, "bitpix is not 32");
    const float vox_offset = get<float>(head, kOffVoxOffset);
    if (vox_offset != float(kVoxOffset)) bad(path, "vox_offset is not 352");
    const float slope = get<float>(head, kOffSclSlope);
    if (slope != 0.0f && slope != 1.0f) bad(path, "scl_slope must be 0 or 1");
    if (get<float>(head, kOffSclInter) != 0.0f) bad(path, "scl_inter must be 0");

    Grid3D g;
    for (int a = 0; a < 3; ++a) {
        g.dims[a] = get<std::int16_t>(head, kOffDim + 2 * (a + 1));
        if (g.dims[a] < 1) bad(path, "dim[" + std::to_string(a + 1) + "] < 1");
        g.spacing[a] = get<float>(head, kOffPixdim + 4 * (a + 1));
        if (!(g.spacing[a] > 0.0)) bad(path, "pixdim[" + std::to_string(a + 1) + "] <= 0");
    }
    if (get<std::int16_t>(head, kOffSformCode) == 1) {
        Eigen::Matrix3d scaled;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) scaled(r, c) = get<float>(head, kOffSrow + 16 * r + 4 * c);
            g.origin[r] = get<float>(head, kOffSrow + 16 * r + 12);
        }
        for (int c = 0; c < 3; ++c) scaled.col(c) /= g.spacing[c];
        if ((scaled.transpose() * scaled - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
            // Nearest orthonormal matrix (polar factor) absorbs float32 rounding of srow.
            Eigen::JacobiSVD<Eigen::Matrix3d> svd(scaled, Eigen::ComputeFullU | Eigen::ComputeFullV);
            scaled = svd.matrixU() * svd.matrixV().transpose();
        }
        g.axes = scaled;
    }

    Volume3D vol(g);
    std::vector<char> body(4 * std::size_t(g.size()));
    in.seekg(std::streamoff(kVoxOffset));
    in.read(body.data(), std::streamsize(body.size()));
    if (std::size_t(in.gcount()) != body.size()) bad(path, "truncated voxel data");
    for (Index i = 0; i < vol.size(); ++i) {
        const float v = get<float>(body, 4 * std::size_t(i));
        if (!std::isfinite(v)) bad(path, "non-finite voxel value");
        vol.data()[i] = v;
    }
    return vol;
}

}  // namespace srt2
