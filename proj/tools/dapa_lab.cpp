#include "dapa/cli.hpp"

int main(int argc, char** argv) { return dapa::cli::run_cli(argc, argv); }
