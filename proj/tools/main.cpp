#include "cli.hpp"

int main(int argc, char** argv) { return windcnn::tools::run_cli(argc, argv); }
