#include "lingoq/cli.hpp"

int main(int argc, char** argv) { return lingoq::cli::run(argc, argv); }
