#include "detcnn/commands.hpp"

int main(int argc, char** argv) { return detcnn::cli::run(argc, argv); }
