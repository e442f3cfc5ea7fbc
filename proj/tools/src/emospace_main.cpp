#include "emospace_tools/pipeline.hpp"

int main(int argc, char** argv) { return emospace::cli::run_cli(argc, argv); }
