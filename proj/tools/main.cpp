#include "grokforge/commands.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return grokforge::run_cli({argv, argv + argc}, std::cout, std::cerr);
}
