#include "jobvec/cli.hpp"

int main(int argc, char** argv) { return jobvec::run_cli(argc, argv); }
