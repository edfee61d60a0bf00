#include <cstdio>

int main() {
  std::puts("psr cli placeholder");
  return 0;
}
