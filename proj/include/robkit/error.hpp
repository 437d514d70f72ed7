#pragma once

#include <stdexcept>
#include <string>

namespace robkit {

// Exit-code contract: missing input -> 2, validation failure -> 3, internal -> 1.
enum class ErrorKind { Internal = 1, MissingInput = 2, Validation = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline Error missing_input(std::string msg) { return Error(ErrorKind::MissingInput, std::move(msg)); }
inline Error validation_error(std::string msg) { return Error(ErrorKind::Validation, std::move(msg)); }
inline Error internal_error(std::string msg) { return Error(ErrorKind::Internal, std::move(msg)); }

}  // namespace robkit
