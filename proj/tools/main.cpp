#include <iostream>

#include "sim2xray/cli_app.hpp"

int main(int argc, char** argv) { return sim2xray::run_cli(argc, argv, std::cout, std::cerr); }
