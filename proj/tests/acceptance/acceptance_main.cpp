#include "udaseg/udaseg.hpp"
int main() { return 0; }
