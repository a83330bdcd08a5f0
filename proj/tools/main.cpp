#include "cli_app.hpp"

int main(int argc, char** argv) { return certpol::cli::run_cli(argc, argv); }
