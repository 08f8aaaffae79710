#include "armaid/cli.hpp"

int main(int argc, char** argv) { return armaid::cli_dispatch(argc, argv); }
