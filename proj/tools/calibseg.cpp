#include "calibseg/cli.hpp"

int main(int argc, char** argv) { return calibseg::cli::dispatch(argc, argv); }
