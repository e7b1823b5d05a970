#include <cstdio>

int main() {
  std::puts("panelcli: subcommands not wired up yet");
  return 0;
}
