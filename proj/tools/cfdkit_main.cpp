#include "cfd/cli.hpp"

int main(int argc, char** argv) { return cfd::cli::dispatch(argc, argv); }
