#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace odbss {

// Every error raised by the library derives from Error, so callers that only
// want to report can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NumericOverflow : public Error {
public:
    using Error::Error;
};

// Logistic likelihood has no finite maximizer (perfect or quasi separation).
class SeparationError : public Error {
public:
    using Error::Error;
};

class DegenerateData : public Error {
public:
    using Error::Error;
};

class TooManyCandidates : public Error {
public:
    using Error::Error;
};

class StalledChain : public Error {
public:
    using Error::Error;
};

class InfeasibleDesign : public Error {
public:
    using Error::Error;
};

class InvalidReference : public Error {
public:
    using Error::Error;
};

class DesignSpaceEmpty : public Error {
public:
    using Error::Error;
};

class Shortfall : public Error {
public:
    Shortfall(const std::string& what, std::size_t missing)
        : Error(what), missing_(missing) {}
    std::size_t missing() const noexcept { return missing_; }

private:
    std::size_t missing_;
};

}  // namespace odbss
