#pragma once

#include <filesystem>
#include <string>

#include "data/generators.hpp"

namespace tcdiv::data {

// Stable content hash of a generator configuration (seed included), used
// to key cached datasets and to stamp downstream artifacts.
uint64_t generator_config_hash(const GeneratorConfig& cfg);

// Canonical cache file name for one generated split.
std::string dataset_cache_name(Variant variant, Role role, Shift shift, uint64_t config_hash);

void save_dataset(const std::filesystem::path& path, const ColoredDataset& ds);
ColoredDataset load_dataset(const std::filesystem::path& path);

}  // namespace tcdiv::data
