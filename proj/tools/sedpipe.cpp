#include <string>
#include <vector>

#include "sedpipe/cli.h"

int main(int argc, char** argv) {
  return sed::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
