#include "nvtk/cli.hpp"

int main(int argc, char** argv) { return nvtk::cli::run(argc, argv); }
