#include "wsseg/cli.hpp"

int main(int argc, char** argv) { return wsseg::cli::dispatch(argc, argv); }
