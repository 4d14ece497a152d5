#pragma once

#include <stdexcept>
#include <string>

namespace hlab {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ScheduleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Metric inputs for which the quantity is undefined (zero variance, zero
// feature vector). Callers exclude and count these instead of clamping.
struct DegenerateError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
    }
}

}  // namespace hlab
