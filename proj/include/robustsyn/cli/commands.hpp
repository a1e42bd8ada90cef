#pragma once

#include <exception>
#include <string>
#include <vector>

namespace robustsyn::cli {

// Process exit codes. Each error class maps to its own code.
enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kUsageError = 2,       // unknown flag, bad flag value
  kIoError = 3,          // missing checkpoint or input, unwritable output
  kFormatError = 4,      // corrupt checkpoint, image or manifest
  kShapeError = 5,       // image shape does not match the model
  kInvalidArgument = 6,  // value outside an operation's contract
  kNumericError = 7,     // non-finite values, training divergence
  kMismatch = 8,         // rerun produced different output files
};

// Maps an exception to its exit code.
int exit_code_for(const std::exception& e);

// Runs one command. `args` excludes the program name, e.g. {"psnr", "a.fif", "b.fif"}.
int run(const std::vector<std::string>& args);

// Environment variable naming the default model directory. Relative --model
// and --seeds paths that do not exist are looked up there.
inline constexpr const char* kModelDirEnv = "ROBUSTSYN_MODEL_DIR";

}  // namespace robustsyn::cli
