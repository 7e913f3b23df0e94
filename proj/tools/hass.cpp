#include <string>
#include <vector>

#include "hass/cli.hpp"

int main(int argc, char** argv) {
  return hass::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
