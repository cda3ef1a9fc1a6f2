#include <iostream>

int main() {
    std::cout << "styleset cli placeholder\n";
    return 0;
}
