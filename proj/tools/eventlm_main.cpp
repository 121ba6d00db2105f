#include "eventlm/cli.hpp"

int main(int argc, char** argv) { return eventlm::cli::run(argc, argv); }
