#include "geocpet/cli.hpp"

int main(int argc, char** argv) { return geocpet::cli::main(argc, argv); }
