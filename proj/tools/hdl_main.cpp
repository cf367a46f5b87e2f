#include "hdl/cli.hpp"

int main(int argc, char** argv) { return hdl::run_cli(argc, argv); }
