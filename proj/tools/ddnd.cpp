#include "ddnd/cli.hpp"

int main(int argc, char** argv) { return ddnd::run_cli(argc, argv); }
