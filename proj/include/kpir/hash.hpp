#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "error.hpp"

namespace kpir {

/// 64-bit FNV-1a. Not cryptographic; used to key caches and label inputs.
class fnv1a {
  public:
    fnv1a& update(std::string_view bytes)
    {
        for (unsigned char c : bytes) {
            h_ ^= c;
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    /// Length-prefixed, so ("ab","c") and ("a","bc") hash differently.
    fnv1a& field(std::string_view bytes)
    {
        update(std::to_string(bytes.size()));
        update(":");
        return update(bytes);
    }

    std::uint64_t value() const { return h_; }

    std::string hex() const
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

  private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a{}.update(bytes).hex();
}

}  // namespace kpir
