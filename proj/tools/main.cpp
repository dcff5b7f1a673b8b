#include "commands.hpp"

int main(int argc, char** argv) { return firn::cli::dispatch(argc, argv); }
