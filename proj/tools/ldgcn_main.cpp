#include <string>
#include <vector>

#include <ldgcn/cli.hpp>

int main(int argc, char** argv) {
  return ldgcn::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
