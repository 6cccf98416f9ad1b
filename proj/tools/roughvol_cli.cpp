#include "cli_app.hpp"

int main(int argc, char** argv) { return roughvol::cli::run(argc, argv); }
