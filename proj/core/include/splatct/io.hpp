#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "splatct/metrics.hpp"
#include "splatct/neural.hpp"
#include "splatct/projector.hpp"
#include "splatct/recon.hpp"
#include "splatct/volume.hpp"
#include "splatct/voxgs.hpp"

namespace splatct::io {

// Binary codecs. All integers are u32 and all reals f32, little-endian.
// Decoders throw ParseError on a bad magic, truncation or trailing bytes.

std::string encode_volume(const VoxelVolume& vol);
VoxelVolume decode_volume(const std::string& bytes);

std::string encode_cloud(const VoxGSCloud& cloud);
VoxGSCloud decode_cloud(const std::string& bytes);

// Views only; the geometry travels in a JSON sidecar.
std::string encode_projections(const std::vector<Projection>& views);
std::vector<Projection> decode_projections(const std::string& bytes);

// The model config is stored as the tensor "config".
std::string encode_model(const ToyModel& model);
ToyModel decode_model(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);
// Refuses to replace an existing file unless `overwrite`.
void write_file(const std::filesystem::path& path, const std::string& bytes, bool overwrite);

// JSON documents.

ScannerGeometry geometry_from_json(const std::string& text);
std::string geometry_to_json(const ScannerGeometry& geom);

// Geometry plus the views of a .prj file; the file's angles replace the
// geometry's.
ProjectionSet assemble_projections(const ScannerGeometry& geom, std::vector<Projection> views);

struct ToyExperimentConfig {
  ToyModelConfig model;
  ToyTrainConfig train;
  std::uint64_t init_seed = 0;
};

ToyExperimentConfig toy_config_from_json(const std::string& text);
std::string toy_config_to_json(const ToyExperimentConfig& cfg);

std::string metrics_to_json(const MetricsReport& report);

struct RunManifest {
  std::string command;
  // Resolved options as (flag, value) pairs; together with `command` they
  // reproduce the run.
  std::vector<std::pair<std::string, std::string>> options;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string version;
  std::vector<std::pair<std::string, double>> timings_s;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

// One slice perpendicular to z as a 16-bit binary PGM, mapping [lo, hi] to
// [0, 65535].
std::string encode_pgm_slice(const VoxelVolume& vol, int z, double lo, double hi);

// "iteration,<column>" rows, iterations starting at 1.
std::string trace_csv(const std::vector<double>& values, const std::string& column);

}  // namespace splatct::io
