#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace titleforge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input document. `byte_offset` points at the first byte the parser rejected.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t byte_offset)
        : Error(what + " at byte offset " + std::to_string(byte_offset)), byte_offset_(byte_offset) {}

    std::uint64_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::uint64_t byte_offset_;
};

// A record that cannot be turned into a training example.
class RejectedRecord : public Error {
public:
    using Error::Error;
};

// Caller-supplied values violate an operation's precondition.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// A saved model whose parts (weights, soft prompts, vocabulary, template) do not belong together.
class ManifestMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace titleforge
