// Writes synthetic CIFAR-10-format batches for machines without the real data.
#include "flipbound/surrogate.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Write synthetic plane/ship batches in the CIFAR-10 binary layout", "flipbound-surrogate"};
  std::string dir;
  std::size_t per_batch = 1000;
  std::size_t test = 1000;
  std::uint64_t seed = 0;
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--per-batch", per_batch, "records in each of the five training batches");
  app.add_option("--test", test, "records in the test batch");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    flipbound::write_surrogate_cifar(dir, per_batch, test, seed);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
