#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "ad/tensor.hpp"
#include "util/error.hpp"

namespace tcdiv::io {

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_i64(std::ostream& os, int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
    return v;
}
inline int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
    return v;
}
inline double read_f64(std::istream& is) {
    double v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
    return v;
}

inline void write_tensor(std::ostream& os, const ad::Tensor& t) {
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_i64(os, t.dim(i));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline ad::Tensor read_tensor(std::istream& is) {
    uint32_t rank = read_u32(is);
    if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = read_i64(is);
    ad::Tensor t(std::move(shape));
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double))))
        throw IoError("unexpected end of stream while reading tensor payload");
    return t;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    uint64_t n = read_u64(is);
    if (n > (1ull << 32)) throw FormatError("string length is implausible");
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n)))
        throw IoError("unexpected end of stream while reading string");
    return s;
}

}  // namespace tcdiv::io
