#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ad/tensor.hpp"

namespace tcdiv::data {

// A set of greyscale digit images with class labels, pixels in [0,1].
struct RawDigits {
    ad::Tensor images;  // N x 28 x 28
    std::vector<int32_t> digit_labels;

    int64_t size() const { return images.rank() == 3 ? images.dim(0) : 0; }
};

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);

// Transparently inflates gzip-compressed buffers; anything else passes through.
std::vector<uint8_t> gunzip_if_needed(std::vector<uint8_t> bytes);

// IDX image file (magic 0x00000803, three big-endian dims): bytes scaled
// to [0,1] by dividing by 255. Errors carry the offending byte offset.
ad::Tensor parse_idx_images(std::span<const uint8_t> bytes);

// IDX label file (magic 0x00000801, one dim).
std::vector<int32_t> parse_idx_labels(std::span<const uint8_t> bytes);

// Loads an image/label file pair (optionally .gz) and checks the counts agree.
RawDigits load_raw_digits(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path);

}  // namespace tcdiv::data
