#include "fdlab/benchcli.hpp"

int main(int argc, char** argv) { return fdlab::bench::main_entry(argc, argv); }
