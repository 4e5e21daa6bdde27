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

#include "hmdp/common.hpp"

#include <cstdio>

namespace hmdp
{

std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::InvalidTemplateMix: return "InvalidTemplateMix";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NoReference: return "NoReference";
    case ErrorKind::FrameMismatch: return "FrameMismatch";
    case ErrorKind::MissingSubscore: return "MissingSubscore";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::ConfigHashMismatch: return "ConfigHashMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

std::uint64_t fnv1a64(std::string_view bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value)
{
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace hmdp
