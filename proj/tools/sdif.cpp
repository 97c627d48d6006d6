#include "cli_app.hpp"

int main(int argc, char** argv) { return sdif::cli::run(argc, argv); }
