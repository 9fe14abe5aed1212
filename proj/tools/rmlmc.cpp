#include <rmlmc/bench/cli.hpp>

int main(int argc, char** argv) { return rmlmc::bench::cli_entry(argc, argv); }
