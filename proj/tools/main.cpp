#include "mtlab/labcli/cli.hpp"

int main(int argc, char** argv) { return mtlab::labcli::run_cli(argc, argv); }
