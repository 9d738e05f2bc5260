#include <string>
#include <vector>

#include "scnt/cli.hpp"

int main(int argc, char** argv) {
  return scnt::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
