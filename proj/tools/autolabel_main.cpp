#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
  CLI::App app{"multi-view offboard 3D auto-labeling"};
  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);
  std::fprintf(stderr, "no subcommands wired yet\n");
  return 1;
}
