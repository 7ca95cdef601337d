#include "radnet/commands.hpp"

int main(int argc, char** argv) { return radnet::cli::run_cli(argc, argv); }
