#include "kronhom/cli.hpp"

int main(int argc, char** argv) { return kronhom::cli::run(argc, argv); }
