#include "voxmed/cli.hpp"

int main(int argc, char** argv) { return voxmed::run_cli(argc, argv); }
