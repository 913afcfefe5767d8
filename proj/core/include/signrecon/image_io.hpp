// Copyright 2026 The signrecon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <vector>

#include "signrecon/mri_forward.hpp"

namespace signrecon::io {

/// 8-bit binary PGM; pixel values are clamped to [0, 1] before scaling to 0..255.
void write_pgm(const mri::Image& img, const std::filesystem::path& path);
mri::Image read_pgm(const std::filesystem::path& path);

/// Tiles images left to right with `gap` pixels of zero between them. All
/// tiles must share a height.
mri::Image hstack(const std::vector<mri::Image>& tiles, int gap = 2);
mri::Image vstack(const std::vector<mri::Image>& tiles, int gap = 2);

}  // namespace signrecon::io
