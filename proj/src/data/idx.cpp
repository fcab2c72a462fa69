#include "data/idx.hpp"

#include <zlib.h>

#include <fstream>
#include <string>

#include "util/error.hpp"

namespace tcdiv::data {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be32(std::span<const uint8_t> bytes, size_t offset, const char* what) {
    if (offset + 4 > bytes.size())
        throw FormatError(std::string("idx: truncated ") + what + " at byte " +
                          std::to_string(offset));
    return (static_cast<uint32_t>(bytes[offset]) << 24) |
           (static_cast<uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<uint32_t>(bytes[offset + 3]);
}

std::string hex32(uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

}  // namespace

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<uint8_t> gunzip_if_needed(std::vector<uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return bytes;

    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw IoError("gzip: inflateInit failed");
    std::vector<uint8_t> out;
    out.resize(bytes.size() * 4 + 1024);
    zs.next_in = bytes.data();
    zs.avail_in = static_cast<uInt>(bytes.size());
    size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip: corrupt stream (zlib code " + std::to_string(rc) + ")");
        }
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

ad::Tensor parse_idx_images(std::span<const uint8_t> bytes) {
    uint32_t magic = read_be32(bytes, 0, "magic");
    if (magic != kImageMagic)
        throw FormatError("idx: unexpected magic " + hex32(magic) + " at byte 0, want " +
                          hex32(kImageMagic));
    int64_t n = read_be32(bytes, 4, "image count");
    int64_t rows = read_be32(bytes, 8, "row count");
    int64_t cols = read_be32(bytes, 12, "column count");
    size_t need = 16 + static_cast<size_t>(n * rows * cols);
    if (bytes.size() < need)
        throw FormatError("idx: truncated payload at byte " + std::to_string(bytes.size()) +
                          ", need " + std::to_string(need) + " bytes");
    if (n < 1 || rows < 1 || cols < 1)
        throw FormatError("idx: degenerate dimensions " + std::to_string(n) + "x" +
                          std::to_string(rows) + "x" + std::to_string(cols));
    ad::Tensor images({n, rows, cols});
    for (int64_t i = 0; i < n * rows * cols; ++i)
        images[i] = static_cast<double>(bytes[16 + static_cast<size_t>(i)]) / 255.0;
    return images;
}

std::vector<int32_t> parse_idx_labels(std::span<const uint8_t> bytes) {
    uint32_t magic = read_be32(bytes, 0, "magic");
    if (magic != kLabelMagic)
        throw FormatError("idx: unexpected magic " + hex32(magic) + " at byte 0, want " +
                          hex32(kLabelMagic));
    int64_t n = read_be32(bytes, 4, "label count");
    size_t need = 8 + static_cast<size_t>(n);
    if (bytes.size() < need)
        throw FormatError("idx: truncated payload at byte " + std::to_string(bytes.size()) +
                          ", need " + std::to_string(need) + " bytes");
    std::vector<int32_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        labels[static_cast<size_t>(i)] = bytes[8 + static_cast<size_t>(i)];
    return labels;
}

RawDigits load_raw_digits(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path) {
    RawDigits raw{parse_idx_images(gunzip_if_needed(read_file_bytes(images_path))),
                  parse_idx_labels(gunzip_if_needed(read_file_bytes(labels_path)))};
    if (raw.images.dim(0) != static_cast<int64_t>(raw.digit_labels.size()))
        throw FormatError("idx: " + std::to_string(raw.images.dim(0)) + " images but " +
                          std::to_string(raw.digit_labels.size()) + " labels");
    return raw;
}

}  // namespace tcdiv::data
