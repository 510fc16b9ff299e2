#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy. Both classes surface as CLI exit 4 (unreadable or
// malformed data); flag misuse is validated before work starts and exits 2,
// and a verification sweep with failing rows exits 3. Contract violations
// inside the library stay std::invalid_argument / std::logic_error.

namespace rfq {

// User-supplied data violates a documented precondition (value out of
// range, malformed dataset line, unknown name).
struct input_error : std::runtime_error {
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// A persisted artifact is unreadable: bad magic, truncated payload, failed
// checksum, out-of-range code, or a sketch pair from different streams.
struct corrupt_error : std::runtime_error {
    explicit corrupt_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rfq
