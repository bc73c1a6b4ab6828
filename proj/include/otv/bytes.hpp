#pragma once

// Little-endian byte packing shared by the wire protocol and episode files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace otv {

class ShortRead : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_arithmetic_v<T>);
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            put(std::bit_cast<U>(v));
        } else {
            using U = std::make_unsigned_t<T>;
            const U u = static_cast<U>(v);
            for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xffu));
        }
    }
    void put_bytes(std::string_view b) { buf_.append(b); }

    const std::string& bytes() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    template <class T>
    T get() {
        static_assert(std::is_arithmetic_v<T>);
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            return std::bit_cast<T>(get<U>());
        } else {
            need(sizeof(T));
            using U = std::make_unsigned_t<T>;
            U u = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i)
                u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
            pos_ += sizeof(T);
            return static_cast<T>(u);
        }
    }
    std::string_view get_bytes(std::size_t n) {
        need(n);
        const std::string_view out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw ShortRead("need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", have " +
                            std::to_string(data_.size() - pos_));
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace otv
