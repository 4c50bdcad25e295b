#include "loopsift/cli.hpp"

int main(int argc, char** argv) { return loopsift::run_cli(argc, argv); }
