#include "rfmatch/hash.hpp"

#include <cstdio>

namespace rfmatch {

std::string hex_fingerprint(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace rfmatch
