#include "dlk/cli.hpp"

int main(int argc, char** argv) { return dlk::cli::run(argc, argv); }
