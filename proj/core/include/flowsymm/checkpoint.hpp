#pragma once

#include <filesystem>

#include "flowsymm/train.hpp"

namespace flowsymm {

/// Text checkpoint: a header with the encoder shape, seed and log lambda,
/// then every tensor as "tensor <name> <rows> <cols>" followed by one line
/// per row. Values use 17 significant digits, so a round trip is exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);

/// Throws ParseError (file, line, column) on malformed input.
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace flowsymm
