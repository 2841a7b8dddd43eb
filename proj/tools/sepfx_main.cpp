#include "sepfx/cli.hpp"

int main(int argc, char** argv) { return sepfx::cli::run(argc, argv); }
