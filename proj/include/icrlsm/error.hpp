// SPDX-License-Identifier: Apache-2.0
//
// Error types shared by every icrlsm module. Each error kind maps onto a
// stable CLI exit code (see exit_code()).

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icrlsm {

enum class ErrorKind {
    kInvalidArgument,
    kNotFound,
    kIo,
    kSchema,
    kContract,
    kNumeric,
    kDegenerateColumn,
    kMissingTruth,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& w) : Error(ErrorKind::kInvalidArgument, w) {}
};
struct NotFound : Error {
    explicit NotFound(const std::string& w) : Error(ErrorKind::kNotFound, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::kIo, w) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorKind::kSchema, w) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& w) : Error(ErrorKind::kContract, w) {}
};
struct MissingTruthError : Error {
    explicit MissingTruthError(const std::string& w) : Error(ErrorKind::kMissingTruth, w) {}
};

// Non-finite value in a loss term. `term` names the offending component;
// `checkpoint` is the last good checkpoint directory when one exists.
struct NumericError : Error {
    NumericError(std::string term_name, const std::string& w, std::string checkpoint_path = {})
        : Error(ErrorKind::kNumeric, w), term(std::move(term_name)), checkpoint(std::move(checkpoint_path)) {}
    std::string term;
    std::string checkpoint;
};

struct DegenerateColumnError : Error {
    DegenerateColumnError(std::size_t col, const std::string& w)
        : Error(ErrorKind::kDegenerateColumn, w), column(col) {}
    std::size_t column;
};

// 0 success, 1 numeric failure, 2 usage / schema / io.
inline int exit_code(ErrorKind kind) {
    return kind == ErrorKind::kNumeric ? 1 : 2;
}

}  // namespace icrlsm
