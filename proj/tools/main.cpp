// Command-line driver. Subcommands are filled in as the library grows;
// this stub only establishes argument handling and exit-code conventions.
#include <cstdio>

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spectral stability toolkit for a boundary-damped fluid-conveying tube"};
  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return 0;
}
