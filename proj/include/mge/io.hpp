#pragma once

#include <string>
#include <vector>

#include "mge/pipeline.hpp"

namespace mge {

/// Binary PPM (P6, maxval 255). Values are clamped to [0,1] on write and
/// scaled back on read. `img` is [H x W x 3].
void write_ppm(const std::string& path, const Tensor& img);
Tensor read_ppm(const std::string& path, DType dtype = DType::f32);

/// Line-oriented `key = value` config, `#` comments, keys exactly matching
/// PipelineConfig field names. Unknown keys are errors naming the key.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
std::string config_to_text(const PipelineConfig& cfg);

/// Checkpoint: a directory holding one .mgt file per parameter (named by its
/// path), a manifest listing paths and shapes, and the config snapshot.
void save_checkpoint(const std::string& dir, const ParamStore& ps, const PipelineConfig& cfg);
/// Loads into an empty store; rebuilds from the manifest order.
PipelineConfig load_checkpoint(const std::string& dir, ParamStore& ps);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mge
