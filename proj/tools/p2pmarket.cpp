#include "p2pmarket/cli.hpp"

int main(int argc, char** argv) { return p2pmarket::parse_and_run(argc, argv); }
