#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gcdance/common.hpp"

namespace gcdance {

namespace fs = std::filesystem;

// All file writes go through write-temp-then-rename so a crashed run never
// leaves a truncated artifact behind.
inline void atomic_write(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), errc::data, "cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), errc::data, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, errc::data, "rename failed: " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::data, "cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

// Little-endian scalar serialization into a byte string. The sandbox target is
// little-endian; memcpy keeps it alias-safe.
class ByteWriter {
public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void f32_array(const double* src, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(static_cast<float>(src[i]));
    }
    void bytes(const char* src, std::size_t n) { buf_.append(src, n); }
    const std::string& str() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string source)
        : data_(bytes.data()), size_(bytes.size()), source_(std::move(source)) {}

    std::uint32_t u32() {
        std::uint32_t v;
        copy(&v, 4);
        return v;
    }
    float f32() {
        float v;
        copy(&v, 4);
        return v;
    }
    void f32_array(double* dst, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<double>(f32());
    }
    void expect_magic(const char m[4], const std::string& kind) {
        char got[4];
        copy(got, 4);
        require(std::memcmp(got, m, 4) == 0, errc::data, source_ + ": not a " + kind + " file");
    }
    std::string tag4() {
        char got[4];
        copy(got, 4);
        return std::string(got, 4);
    }
    void raw_bytes(char* dst, std::size_t n) { copy(dst, n); }
    void skip(std::size_t n) {
        require(pos_ + n <= size_, errc::data, source_ + ": truncated file");
        pos_ += n;
    }
    std::size_t remaining() const { return size_ - pos_; }
    const std::string& source() const { return source_; }

private:
    void copy(void* dst, std::size_t n) {
        require(pos_ + n <= size_, errc::data, source_ + ": truncated file");
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string source_;
};

}  // namespace gcdance
