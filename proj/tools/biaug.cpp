#include <string>
#include <vector>

#include "biaug/pipeline.hpp"

int main(int argc, char** argv) {
  return biaug::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
