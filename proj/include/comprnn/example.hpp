// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace comprnn {

enum Label : int { kNotHate = 0, kHate = 1 };

/// A tokenized post: surface words, their character indices and a label.
struct Example {
  std::vector<std::string> words;
  std::vector<std::vector<int>> char_ids; ///< parallel to words
  int label = kNotHate;
};

} // namespace comprnn
