// Copyright (c) 2026 The streamg2p Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace streamg2p {

// Error taxonomy shared by all modules. Each maps to a distinct CLI exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration values (layer index out of range, bad key, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Stateful-object misuse: push after close, wrong conv history length, ...
struct StateError : Error {
  using Error::Error;
};

// Malformed user input: dataset files, hyp/ref count mismatch, ...
struct InputError : Error {
  using Error::Error;
};

// A documented operation precondition was violated (e.g. fully-masked row).
struct ContractError : Error {
  using Error::Error;
};

// Training aborted (non-finite loss).
struct TrainError : Error {
  using Error::Error;
};

}  // namespace streamg2p
