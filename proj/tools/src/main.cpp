#include "wallkin_tools/commands.hpp"

int main(int argc, char** argv) { return wallkin::cli::run(argc, argv); }
