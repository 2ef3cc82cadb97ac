#include <cstdio>

int main() {
  std::puts("fpgap: cli under construction");
  return 2;
}
