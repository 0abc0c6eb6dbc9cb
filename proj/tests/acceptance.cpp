#include <cstdio>
int main(int, char**) { std::puts("criterion pending"); return 1; }
