#include "rdoll/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return rdoll::cli::run(argc, argv, std::cout, std::cerr);
}
