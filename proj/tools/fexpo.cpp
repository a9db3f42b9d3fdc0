#include "fexpo/cli.hpp"

int main(int argc, char** argv) { return fexpo::cli::main(argc, argv); }
