#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace slidekit {

// Compute scalar. The default build trains in 32-bit; defining
// SLIDEKIT_REAL64 switches the whole library to 64-bit for gradient
// verification. Persisted formats always store 32-bit floats.
#ifdef SLIDEKIT_REAL64
using real = double;
#else
using real = float;
#endif

// Error taxonomy, mapped to CLI exit codes (data -> 2, numeric -> 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Writes bytes to `path` via a temp file + rename so interrupted runs never
// leave a half-written artifact.
void atomic_write_file(const std::string& path, const void* data, size_t size);
void atomic_write_file(const std::string& path, const std::string& text);

}  // namespace slidekit
