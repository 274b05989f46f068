#include "cli.hpp"

int main(int argc, char** argv) { return vtnet::cli::dispatch(argc, argv); }
