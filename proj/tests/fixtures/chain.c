#include <stdio.h>

__attribute__((noinline)) int bar(int x) {
  printf("bar %d\n", x);
  return x + 1;
}

__attribute__((noinline)) int foo(int x) { return bar(x * 2); }

int main(void) { return foo(20) == 41 ? 0 : 1; }
