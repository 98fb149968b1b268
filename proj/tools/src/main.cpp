#include "maxgnr_app/commands.hpp"

int main(int argc, char** argv) { return maxgnr::app::run_cli(argc, argv); }
