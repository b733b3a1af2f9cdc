#include <iostream>

#include "grpo_tta/cli.hpp"

int main(int argc, char** argv) { return grpo_tta::cli_main(argc, argv, std::cout, std::cerr); }
