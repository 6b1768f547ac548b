#include "needleforge/cli.hpp"

int main(int argc, char** argv) { return needleforge::run_cli(argc, argv); }
