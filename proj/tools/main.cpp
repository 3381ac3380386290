#include <iostream>

#include "cli.hpp"
#include "fpsr/runtime.hpp"

int main(int argc, char** argv) {
  fpsr::retain_freed_memory();
  std::vector<std::string> args(argv + 1, argv + argc);
  return fpsr::cli::run(args, std::cerr);
}
