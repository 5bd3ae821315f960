#pragma once

#include <stdexcept>
#include <string>

namespace malr {

// Root of every error the library throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model or expert endpoint failed (unreachable, timeout, HTTP error, provider failure).
class BackendError : public Error {
public:
    using Error::Error;
};

// Endpoint answered, but the payload could not be understood.
class MalformedResponseError : public BackendError {
public:
    MalformedResponseError(const std::string& what, std::string raw)
        : BackendError(what), raw_payload_(std::move(raw)) {}
    const std::string& raw_payload() const noexcept { return raw_payload_; }

private:
    std::string raw_payload_;
};

// Bad input data: files, records, model output that must follow a format.
class DataError : public Error {
public:
    using Error::Error;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class NotFoundError : public DataError {
public:
    using DataError::DataError;
};

class MissingSlotError : public DataError {
public:
    MissingSlotError(const std::string& template_name, std::string slot)
        : DataError("template '" + template_name + "' is missing binding for slot '" + slot + "'"),
          slot_(std::move(slot)) {}
    const std::string& slot() const noexcept { return slot_; }

private:
    std::string slot_;
};

// Model output that does not follow the protocol a stage requires. Keeps the raw text.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::string raw)
        : DataError(what), raw_text_(std::move(raw)) {}
    const std::string& raw_text() const noexcept { return raw_text_; }

private:
    std::string raw_text_;
};

// Caller broke an operation's precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class TrialBudgetExhausted : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

}  // namespace malr
