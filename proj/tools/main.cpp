#include <iostream>

#include "otground/cli.hpp"

int main(int argc, char** argv)
{
    return otground::cli::dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
