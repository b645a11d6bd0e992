#include <iostream>

#include "llmpoet/cli.hpp"

int main(int argc, char** argv) {
  return llmpoet::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
