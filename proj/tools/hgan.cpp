#include <iostream>
#include <string>
#include <vector>

#include <unistd.h>

#include "hgan/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return hgan::cli::run(args, std::cout, std::cerr, environ);
}
