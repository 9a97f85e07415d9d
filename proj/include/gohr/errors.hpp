#pragma once

#include <stdexcept>
#include <string>

namespace gohr {

// Input outside a documented domain (cell coordinates, bucket index, ...).
class DomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid configuration: too many pieces for the allowed cells, bad hyperparameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed rule names, catalog entries, trial lists or JSON payloads.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A move referenced a piece that is not on the board. This is a client bug,
// not a rule verdict, so it never produces a response code.
class AddressingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Operation attempted on an episode that already finished.
class EpisodeFinishedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gohr
