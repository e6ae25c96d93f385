#include "gemmgan/cli/commands.hpp"

int main(int argc, char** argv) { return gemmgan::cli::run_cli(argc, argv); }
