#include "aircast_cli/cli.hpp"

int main(int argc, char** argv) { return aircast::cli::run(argc, argv); }
