#include <cstdio>

int main() {
  std::puts("flowstate CLI placeholder");
  return 0;
}
