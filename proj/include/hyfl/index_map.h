// Copyright 2026 The hyfl Authors. All Rights Reserved.
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

#ifndef HYFL_INDEX_MAP_H_
#define HYFL_INDEX_MAP_H_

#include <vector>

namespace hyfl {

// Grid of codeword indices, row-major.
struct IndexMap {
  int height = 0;
  int width = 0;
  std::vector<int> indices;

  IndexMap() = default;
  IndexMap(int h, int w, int fill = 0) : height(h), width(w), indices(h * w, fill) {}

  int size() const { return height * width; }
  int& at(int i, int j) { return indices[i * width + j]; }
  int at(int i, int j) const { return indices[i * width + j]; }
  bool operator==(const IndexMap&) const = default;
};

}  // namespace hyfl

#endif  // HYFL_INDEX_MAP_H_
