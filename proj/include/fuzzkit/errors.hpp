#pragma once

#include <stdexcept>
#include <string>

namespace fuzzkit {

// Base for all toolkit errors. Subclasses map onto CLI exit codes:
// usage/config -> 1, environment -> 2, everything else -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct EnvironmentError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct StoreError : Error {
  using Error::Error;
};

struct ProviderError : Error {
  using Error::Error;
};

struct GenerationError : Error {
  using Error::Error;
};

// Input no longer reproduces its crash under the triage oracle.
struct FlakyInputError : Error {
  using Error::Error;
};

}  // namespace fuzzkit
