#include <cstdio>

// Placeholder entry point; subcommands are wired up as the modules land.
int main() {
  std::printf("pixelvol\n");
  return 0;
}
