#include <cstdio>

int main() {
    std::puts("mscs: command-line interface under construction");
    return 1;
}
