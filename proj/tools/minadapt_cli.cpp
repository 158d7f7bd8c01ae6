#include <cstdio>

int main() {
    std::puts("minadapt: placeholder");
    return 0;
}
