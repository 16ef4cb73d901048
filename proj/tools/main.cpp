#include "kernelmix/cli.hpp"

int main(int argc, char** argv) { return kernelmix::cli_main(argc, argv); }
