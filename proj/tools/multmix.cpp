#include "multmix/cli.hpp"

int main(int argc, char** argv) { return multmix::cli::run(argc, argv); }
