#include "chargecast/cli.hpp"

int main(int argc, char** argv) { return chargecast::run_cli(argc, argv); }
