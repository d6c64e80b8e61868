#include "slung/commands.hpp"

int main(int argc, char** argv) { return slung::run_cli(argc, argv); }
