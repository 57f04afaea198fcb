#include "chgo/cli.hpp"

int main(int argc, char** argv) { return chgo::cli_main(argc, argv); }
