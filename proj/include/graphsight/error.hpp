#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace graphsight {

/// Base of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for a primitive or layer.
class shape_error : public error {
public:
    using error::error;
};

/// A precondition on the arguments of an operation was violated.
class invalid_input : public error {
public:
    using error::error;
};

/// Configuration problems, collected exhaustively before being raised.
class config_error : public error {
public:
    explicit config_error(std::vector<std::string> problems)
        : error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string out = "invalid configuration";
        for (const auto& s : p) out += "; " + s;
        return out;
    }
    std::vector<std::string> problems_;
};

/// File could not be read, parsed or written.
class io_error : public error {
public:
    using error::error;
};

}  // namespace graphsight
