#pragma once

#include <stdexcept>
#include <string>

namespace l2lws {

// Error taxonomy shared by every module. All derive from std::runtime_error so
// callers that do not care about the category can catch one type.

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (non-scalar loss, empty map, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data failed a semantic check (label not a distribution, missing label, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input (empty token sequence, bad file line, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace l2lws
