#pragma once

#include <stdexcept>
#include <string>

namespace nf3d {

/// Malformed or inconsistent input: unreadable files, bad formats,
/// dimension mismatches, infeasible requests.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation that cannot proceed numerically: degenerate geometry,
/// failed factorizations, exhausted damping.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nf3d
