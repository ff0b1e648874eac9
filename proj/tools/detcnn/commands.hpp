#pragma once

#include <filesystem>
#include <string>

#include "detcnn/error.hpp"
#include "detcnn/graph.hpp"
#include "detcnn/harness.hpp"

namespace detcnn::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

int exit_code_for(ErrorKind kind);

/// Parses argv and runs one subcommand; never throws.
int run(int argc, char** argv);

struct LoadedRun {
  RunManifest manifest;
  ModelGraph graph;
};

/// Reads manifest.txt and weights.dcw from a run directory and rebuilds the
/// model they describe.
LoadedRun load_run(const std::filesystem::path& dir);

}  // namespace detcnn::cli
