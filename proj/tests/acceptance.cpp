#include "fastbal/fastbal.hpp"
int main(){return 0;}
