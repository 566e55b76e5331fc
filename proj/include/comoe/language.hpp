// include/comoe/language.hpp

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

#pragma once

#include <string>
#include <string_view>

namespace comoe {

// Utterance-level language class. The integer values index the LID logits.
enum class Lid : int { CN = 0, EN = 1, CS = 2 };

inline constexpr int kNumLidClasses = 3;

std::string_view lid_name(Lid lid);
// Throws ValidationError for anything outside {CN, EN, CS}.
Lid parse_lid(std::string_view text);

}  // namespace comoe
