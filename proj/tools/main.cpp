#include "nalu/cli.hpp"

int main(int argc, char** argv) { return nalu::cli::dispatch(argc, argv); }
