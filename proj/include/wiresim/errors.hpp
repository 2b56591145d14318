// Copyright 2026 The wiresim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace wiresim {

// Root of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The physical model is ill-posed for the requested parameters.
class ModelError : public Error {
 public:
  using Error::Error;
};

class EllipticViolation : public ModelError {
 public:
  using ModelError::ModelError;
};

class AssumptionViolation : public ModelError {
 public:
  using ModelError::ModelError;
};

class SingularBasis : public ModelError {
 public:
  using ModelError::ModelError;
};

// Something went wrong while computing (integrators, extraction, ensembles).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class StepTooLarge : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateSpectrum : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotInGroup : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BlockSingular : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientSamples : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace wiresim
