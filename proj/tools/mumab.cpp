#include "mumab/cli.hpp"

int main(int argc, char** argv) {
    return mumab::cli::run_cli(argc, argv);
}
