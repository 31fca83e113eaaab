#pragma once

namespace chargecast {

/// Command-line entry point. Returns 0 on success, 1 on user error, 2 on numerical failure.
int run_cli(int argc, char** argv);

}  // namespace chargecast
