#pragma once

#include <stdexcept>
#include <string>

namespace hhfl {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A topology spec violates its structural invariants.
class InvalidSpec : public Error {
public:
    using Error::Error;
};

/// An experiment or run configuration is inconsistent.
class InvalidConfig : public Error {
public:
    using Error::Error;
};

/// The requested data partition cannot be satisfied by the dataset.
class InfeasiblePartition : public Error {
public:
    InfeasiblePartition(const std::string& what, int client, int label)
        : Error(what), client_id(client), class_label(label) {}
    int client_id;
    int class_label;
};

/// A non-finite value appeared during training.
class NumericFailure : public Error {
public:
    NumericFailure(const std::string& what, int step_at, int client)
        : Error(what), step(step_at), client_id(client) {}
    int step;
    int client_id;
};

/// Problem constants required by a bound evaluator are missing.
class IncompleteConstants : public Error {
public:
    using Error::Error;
};

/// A bound configuration violates the learning-rate preconditions.
class InvalidBoundConfig : public Error {
public:
    using Error::Error;
};

/// A trace never satisfied the convergence criterion.
class NoConvergence : public Error {
public:
    using Error::Error;
};

/// An input sequence is too short for the requested computation.
class InsufficientData : public Error {
public:
    using Error::Error;
};

}  // namespace hhfl
