#pragma once

#include <stdexcept>
#include <string>

namespace otground {

// Malformed arguments: wrong shapes, out-of-range parameters, bad config values.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input is well-formed but geometrically unusable (e.g. a zero-norm row).
class DegenerateInput : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Problem exceeds what an exact small-instance method accepts.
class UnsupportedSize : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// NaN/Inf or total mass underflow during an iterative computation.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// On-disk data does not match its declared layout.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace otground
