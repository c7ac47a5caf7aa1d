#include <iostream>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_logger_mt("specfas"));
  return specfas::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
