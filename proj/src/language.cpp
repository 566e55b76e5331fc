// src/language.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "comoe/language.hpp"

#include "comoe/errors.hpp"

namespace comoe {

std::string_view lid_name(Lid lid) {
  switch (lid) {
    case Lid::CN: return "CN";
    case Lid::EN: return "EN";
    case Lid::CS: return "CS";
  }
  return "?";
}

Lid parse_lid(std::string_view text) {
  if (text == "CN") return Lid::CN;
  if (text == "EN") return Lid::EN;
  if (text == "CS") return Lid::CS;
  throw ValidationError("invalid LID label '" + std::string(text) + "' (expected CN, EN or CS)");
}

}  // namespace comoe
