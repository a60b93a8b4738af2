#include "ebcbf/cli.hpp"

int main(int argc, char** argv) { return ebcbf::run_command(argc, argv); }
