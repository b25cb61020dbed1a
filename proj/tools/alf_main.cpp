#include <string>
#include <vector>

#include "alf/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return alf::cli_dispatch(args);
}
