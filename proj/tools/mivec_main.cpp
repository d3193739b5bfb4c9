#include "mivec/cli.hpp"

int main(int argc, char** argv) { return mivec::run_cli(argc, argv); }
