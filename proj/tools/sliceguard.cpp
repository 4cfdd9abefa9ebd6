#include "sliceguard/cli.hpp"

int main(int argc, char** argv) { return sliceguard::cli::run(argc, argv); }
