#include <cstdio>

int main() {
  std::puts("fbsde_lab: experiment runner (subcommands land with the experiment layer)");
  return 0;
}
