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

#include "signrecon/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "signrecon/errors.hpp"

namespace signrecon::io {

void write_pgm(const mri::Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

mri::Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  is.get();
  if (!is || magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw CorruptFileError(path.string() + ": unsupported PGM");
  }
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw CorruptFileError(path.string() + ": truncated PGM");
  mri::Image img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

mri::Image hstack(const std::vector<mri::Image>& tiles, int gap) {
  if (tiles.empty()) return {};
  const int h = tiles.front().height;
  int w = 0;
  for (const auto& t : tiles) {
    if (t.height != h) throw InvalidInputError("hstack: tiles must share a height");
    w += t.width;
  }
  w += gap * static_cast<int>(tiles.size() - 1);
  mri::Image out(h, w);
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < t.width; ++c) out.at(r, x0 + c) = t.at(r, c);
    x0 += t.width + gap;
  }
  return out;
}

mri::Image vstack(const std::vector<mri::Image>& tiles, int gap) {
  if (tiles.empty()) return {};
  const int w = tiles.front().width;
  int h = 0;
  for (const auto& t : tiles) {
    if (t.width != w) throw InvalidInputError("vstack: tiles must share a width");
    h += t.height;
  }
  h += gap * static_cast<int>(tiles.size() - 1);
  mri::Image out(h, w);
  int y0 = 0;
  for (const auto& t : tiles) {
    for (int r = 0; r < t.height; ++r)
      for (int c = 0; c < w; ++c) out.at(y0 + r, c) = t.at(r, c);
    y0 += t.height + gap;
  }
  return out;
}

}  // namespace signrecon::io
