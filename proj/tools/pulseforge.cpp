#include "pulseforge/cli.hpp"

int main(int argc, char** argv) { return pulseforge::cli::run(argc, argv); }
