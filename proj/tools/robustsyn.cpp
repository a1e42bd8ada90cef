#include <string>
#include <vector>

#include "robustsyn/cli/commands.hpp"
#include "robustsyn/service/server.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args.front() == "serve") {
    return robustsyn::service::serve_main(std::vector<std::string>(args.begin() + 1, args.end()));
  }
  return robustsyn::cli::run(args);
}
