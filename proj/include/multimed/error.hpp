#pragma once

#include <stdexcept>
#include <string>

namespace multimed {

// Malformed or invalid user input: files that do not parse, out-of-range
// arguments, inconsistent roles. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The input is well-formed but the requested analysis cannot be carried out
// (identification failure, empty strata, non-finite data). Exit code 1.
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyStratumError : public AnalysisError {
public:
    explicit EmptyStratumError(std::string stratum)
        : AnalysisError("empty stratum: " + stratum), stratum_(std::move(stratum)) {}

    const std::string& stratum() const noexcept { return stratum_; }

private:
    std::string stratum_;
};

}  // namespace multimed
