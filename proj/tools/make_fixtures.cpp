// SPDX-License-Identifier: Apache-2.0
// Writes the deterministic fixture corpus (config.yaml plus feeds/<feed>/...)
// into the given directory.
#include <fstream>
#include <iostream>

#include "fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: citypulse_fixtures OUT_DIR\n";
    return 1;
  }
  try {
    auto set = citypulse::fixtures::standardFixture();
    for (const auto& p : citypulse::fixtures::writeFixture(set, argv[1])) std::cout << p.string() << '\n';
    std::ofstream(std::filesystem::path(argv[1]) / "example_frame.ndjson")
        << citypulse::fixtures::threePersonFrameNdjson();
  } catch (const std::exception& e) {
    std::cerr << "citypulse_fixtures: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
