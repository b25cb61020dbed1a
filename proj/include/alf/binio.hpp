#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "alf/error.hpp"

namespace alf {

// Little-endian byte packing, independent of host order.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }

    const std::string& data() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::string buf_;
};

// Bounds-checked reads; every failure names the offset it happened at.
class ByteReader {
public:
    ByteReader(const void* p, std::size_t n)
        : p_(static_cast<const unsigned char*>(p)), n_(n) {}
    explicit ByteReader(const std::string& s) : ByteReader(s.data(), s.size()) {}

    std::uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return n_ - pos_; }

private:
    void need(std::size_t n) const {
        if (n_ - pos_ < n) {
            throw FormatError("unexpected end of data at offset " + std::to_string(pos_) +
                              " (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(n_ - pos_) + ")");
        }
    }

    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const void* p, std::size_t n);
inline std::uint32_t crc32_of(const std::string& s) { return crc32_of(s.data(), s.size()); }

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace alf
