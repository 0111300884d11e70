#include "commands.hpp"

int main(int argc, char** argv) { return retina::cli::run_command(argc, argv); }
