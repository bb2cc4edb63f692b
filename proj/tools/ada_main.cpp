#include "ada/cli.hpp"

int main(int argc, char** argv) { return ada::run_cli(argc, argv); }
