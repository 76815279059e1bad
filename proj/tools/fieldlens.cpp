#include <iostream>

#include "fieldlens/cli.hpp"

int main(int argc, char** argv) {
    return fieldlens::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
