#include "nxtp/cli.hpp"

int main(int argc, char** argv) { return nxtp::run(argc, argv); }
