#include "data/cache.hpp"

#include <fstream>

#include "util/binio.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"

namespace tcdiv::data {

namespace {

constexpr uint64_t kDatasetMagic = 0x31544144564443ULL;  // "CDVDAT1"

uint64_t hash_f64(double v, uint64_t h) { return fnv1a_bytes(&v, sizeof v, h); }

}  // namespace

uint64_t generator_config_hash(const GeneratorConfig& cfg) {
    uint64_t h = fnv1a("generator-config-v1");
    h = hash_f64(cfg.label_flip_prob, h);
    for (double p : cfg.colour_flip_probs_per_env) h = hash_f64(p, h);
    h = hash_f64(cfg.colour2_flip_prob, h);
    h = hash_f64(cfg.rotation_flip_prob, h);
    h = fnv1a(shift_name(cfg.shift), h);
    h = fnv1a_bytes(&cfg.rng_seed, sizeof cfg.rng_seed, h);
    return h;
}

std::string dataset_cache_name(Variant variant, Role role, Shift shift, uint64_t config_hash) {
    std::string name = variant_name(variant);
    name += '-';
    name += role_name(role);
    if (shift != Shift::None) {
        name += '-';
        name += shift_name(shift);
    }
    name += '-';
    name += hex64(config_hash);
    name += ".dat";
    return name;
}

void save_dataset(const std::filesystem::path& path, const ColoredDataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open dataset cache for writing: " + path.string());
    io::write_u64(os, kDatasetMagic);
    io::write_u32(os, static_cast<uint32_t>(ds.variant));
    io::write_u32(os, static_cast<uint32_t>(ds.role));
    io::write_u64(os, ds.rng_seed);
    io::write_u32(os, static_cast<uint32_t>(ds.channels));
    io::write_tensor(os, ds.inputs);
    io::write_u64(os, ds.labels.size());
    for (int32_t v : ds.labels) io::write_u32(os, static_cast<uint32_t>(v));
    for (const Provenance& p : ds.provenance) {
        char bits[5] = {static_cast<char>(p.digit_group), static_cast<char>(p.clean_label),
                        static_cast<char>(p.colour_bit), static_cast<char>(p.colour2_bit),
                        static_cast<char>(p.common_cause_bit)};
        os.write(bits, sizeof bits);
    }
    if (!os) throw IoError("failed writing dataset cache: " + path.string());
}

ColoredDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset cache: " + path.string());
    if (io::read_u64(is) != kDatasetMagic)
        throw FormatError("not a dataset cache file: " + path.string());
    ColoredDataset ds;
    ds.variant = static_cast<Variant>(io::read_u32(is));
    ds.role = static_cast<Role>(io::read_u32(is));
    ds.rng_seed = io::read_u64(is);
    ds.channels = static_cast<int>(io::read_u32(is));
    ds.inputs = io::read_tensor(is);
    uint64_t n = io::read_u64(is);
    if (ds.inputs.rank() != 2 || ds.inputs.dim(0) != static_cast<int64_t>(n))
        throw FormatError("dataset cache: row count mismatch in " + path.string());
    ds.labels.resize(n);
    for (uint64_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int32_t>(io::read_u32(is));
    ds.provenance.resize(n);
    for (uint64_t i = 0; i < n; ++i) {
        char bits[5];
        if (!is.read(bits, sizeof bits))
            throw IoError("dataset cache: truncated provenance in " + path.string());
        ds.provenance[i] = Provenance{static_cast<int8_t>(bits[0]), static_cast<int8_t>(bits[1]),
                                      static_cast<int8_t>(bits[2]), static_cast<int8_t>(bits[3]),
                                      static_cast<int8_t>(bits[4])};
    }
    return ds;
}

}  // namespace tcdiv::data
