#include "hypermux/cli.hpp"

int main(int argc, char** argv) { return hypermux::cli::main(argc, argv); }
