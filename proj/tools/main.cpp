#include <iostream>

#include "synthdial/runner.hpp"

int main(int argc, char** argv) {
  return synthdial::run_cli(argc, argv, std::cout, std::cerr);
}
