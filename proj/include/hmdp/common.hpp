// Copyright 2026 The hmdp Authors
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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hmdp
{

/// Planning horizon: 40 poses at 10 Hz.
inline constexpr std::size_t kHorizonSteps = 40;
inline constexpr double kStepDt = 0.1;
/// Agent tracks carry t = 0 .. 4 s inclusive.
inline constexpr std::size_t kAgentSamples = kHorizonSteps + 1;
inline constexpr std::size_t kFlatDim = 3 * kHorizonSteps;
/// Distillation metrics (EC has no head).
inline constexpr std::size_t kNumDistillMetrics = 8;

enum class ErrorKind {
  Schema,
  InvalidTemplateMix,
  InsufficientData,
  NoReference,
  FrameMismatch,
  MissingSubscore,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyGrid,
  ConfigHashMismatch,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` discriminates, `context()` carries
/// the offending field path, batch id, file name etc.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string & message, std::string context = {})
  : std::runtime_error(message), kind_(kind), context_(std::move(context))
  {
  }

  ErrorKind kind() const noexcept { return kind_; }
  const std::string & context() const noexcept { return context_; }

private:
  ErrorKind kind_;
  std::string context_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace hmdp
