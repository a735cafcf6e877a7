// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kgq
{

/// Coarse error classes. They map one-to-one onto the C API status codes and
/// from there onto the CLI exit codes.
enum class ErrorKind
{
    InvalidArgument,
    Input,     // unreadable or malformed files, validation failures
    Config,    // missing index, provider, or catalog entry
    Transport, // endpoint or model unreachable after retries
    Internal,
};

class Error: public std::runtime_error
{
  public:
    Error(ErrorKind kind, const std::string& message): std::runtime_error(message), _kind(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return _kind; }

  private:
    ErrorKind _kind;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace kgq
