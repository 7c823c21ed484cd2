#include "commands.hpp"

int main(int argc, char** argv) { return tikmv::cli::main_entry(argc, argv); }
