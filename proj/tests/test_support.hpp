#pragma once

// Seeded generators shared by the unit and acceptance suites.

#include <filesystem>
#include <string>

#include "llmpoet/grid.hpp"
#include "llmpoet/rng.hpp"

namespace llmpoet::testing {

inline grid::VoxelGrid random_grid(Rng& rng, bool allow_actuators, int min_width = 1,
                                   int max_width = 40, int max_height = 15) {
  const int w = min_width + static_cast<int>(uniform_index(rng, max_width - min_width + 1));
  const int h = 1 + static_cast<int>(uniform_index(rng, max_height));
  grid::VoxelGrid g(w, h);
  const std::size_t kinds = allow_actuators ? 5 : 3;
  for (int row = 0; row < h; ++row)
    for (int x = 0; x < w; ++x) g.set(x, row, static_cast<grid::Voxel>(uniform_index(rng, kinds)));
  return g;
}

// Mixes grid-like rows, prose, code fences and junk characters.
inline std::string fuzz_raw_text(Rng& rng) {
  static const std::string alphabet = "HHHSSS---VOX?#. \tabcxyz*\r";
  static const char* prose[] = {"Here is your environment:", "```", "Sure!", "", "   ",
                                "The terrain has many holes.", "END"};
  std::string out;
  const auto lines = uniform_index(rng, 30);
  for (std::size_t i = 0; i < lines; ++i) {
    if (bernoulli(rng, 0.2)) {
      out += prose[uniform_index(rng, std::size(prose))];
    } else {
      const auto len = uniform_index(rng, 50);
      const bool clean = bernoulli(rng, 0.6);
      for (std::size_t k = 0; k < len; ++k)
        out.push_back(clean ? "HS-"[uniform_index(rng, 3)]
                            : alphabet[uniform_index(rng, alphabet.size())]);
    }
    out.push_back('\n');
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("llmpoet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace llmpoet::testing
