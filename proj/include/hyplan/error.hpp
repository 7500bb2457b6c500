/* Copyright 2026 The hyplan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef HYPLAN_ERROR_HPP_
#define HYPLAN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hyplan {

// Root of every error raised by the planner.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NoBandwidthEntry : public Error {
 public:
  using Error::Error;
};

class InvalidDeviceCount : public Error {
 public:
  using Error::Error;
};

class InconsistentStrategy : public Error {
 public:
  using Error::Error;
};

class IndivisibleMicrobatch : public Error {
 public:
  using Error::Error;
};

// Raised by optimize() when no (pp, microbatch) combination fits in memory.
class NoFeasiblePlan : public Error {
 public:
  using Error::Error;
};

class OracleTooLarge : public Error {
 public:
  using Error::Error;
};

// Internal invariant of the pipeline simulator; reaching it is a bug.
class SchedulingDeadlock : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hyplan

#endif  // HYPLAN_ERROR_HPP_
