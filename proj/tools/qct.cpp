#include <iostream>

#include "qct/cli.hpp"

int main(int argc, char** argv)
{
    return qct::cli::run(argc, argv, std::cout, std::cerr);
}
