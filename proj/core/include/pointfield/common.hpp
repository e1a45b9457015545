// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace pointfield {

// Thrown when a caller breaks a documented precondition (bad shapes, bad
// ranges, empty inputs). These are programming errors, not I/O conditions.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed input data (PLY headers, JSON scenes, config files, checkpoints).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a training loop hits a non-finite loss. Carries the path of the
// last checkpoint written before the abort (empty if none was written yet).
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& msg, std::string last_checkpoint)
        : std::runtime_error(msg), last_checkpoint_(std::move(last_checkpoint)) {}
    const std::string& last_checkpoint() const { return last_checkpoint_; }

private:
    std::string last_checkpoint_;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <class T, class... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    cat_into(os, rest...);
}
}  // namespace detail

template <class... Ts>
std::string cat(const Ts&... parts) {
    std::ostringstream os;
    os.precision(17);
    detail::cat_into(os, parts...);
    return os.str();
}

template <class... Ts>
void require(bool cond, const Ts&... msg_parts) {
    if (!cond) {
        throw ContractViolation(cat(msg_parts...));
    }
}

}  // namespace pointfield
