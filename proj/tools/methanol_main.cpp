#include "methanol/cli.hpp"

int main(int argc, char** argv) { return methanol::cli_run(argc, argv); }
