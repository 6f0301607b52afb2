#include "unicon/cli.hpp"

int main(int argc, char** argv) { return unicon::cli::run(argc, argv); }
