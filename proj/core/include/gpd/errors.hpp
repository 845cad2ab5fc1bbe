/********************************************************************************
 * Copyright 2026 The GPD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 ********************************************************************************/


#pragma once

#include <stdexcept>
#include <string>

namespace gpd {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or unknown configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or inconsistent data files.
class DataError : public Error {
public:
    using Error::Error;
};

/// A record violates the trial protocol (segment count, digit coverage, labels).
class ProtocolError : public DataError {
public:
    using DataError::DataError;
};

/// Shape mismatch between matrices or network inputs.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or overflow during training.
class NumericError : public Error {
public:
    using Error::Error;
};

/// CKA is undefined because one feature set has no variance.
class DegenerateSimilarity : public NumericError {
public:
    using NumericError::NumericError;
};

/// Attempt to mutate a frozen network.
class ContractViolation : public Error {
public:
    using Error::Error;
};

}  // namespace gpd
