#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacon/scenegen.hpp"

namespace bacon::dataset {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFormat = "bacon-dataset/1";

// 8-bit RGB / grayscale PNG and little-endian float32 PFM codecs.
void write_png_rgb(const fs::path& path, const Image& img);
Image read_png_rgb(const fs::path& path);
void write_png_gray(const fs::path& path, const Grid<std::uint8_t>& img);
Grid<std::uint8_t> read_png_gray(const fs::path& path);
void write_png_mask(const fs::path& path, const Mask& mask);  // 0/255
Mask read_png_mask(const fs::path& path);
void write_pfm(const fs::path& path, const Map& map);
Map read_pfm(const fs::path& path);

nlohmann::json scene_to_json(const scenegen::SceneSpec& spec);
scenegen::SceneSpec scene_from_json(const nlohmann::json& j);

// One folder per frame: view_{k}.png, depth_{k}.pfm, disp_{i}_{j}.pfm,
// occ_{i}_{j}.png, meta.json.
void write_frame(const scenegen::MultiBaselineFrame& frame, const fs::path& dir);
scenegen::MultiBaselineFrame read_frame(const fs::path& dir);

// Writes frames under root plus manifest.json. `extra` is merged into the
// manifest (config hash, generator settings).
void write_dataset(const std::vector<scenegen::MultiBaselineFrame>& frames, const fs::path& root,
                   const nlohmann::json& extra);
void write_dataset(const std::vector<scenegen::MultiBaselineFrame>& frames, const fs::path& root);
nlohmann::json read_manifest(const fs::path& root);
std::vector<scenegen::MultiBaselineFrame> read_dataset(const fs::path& root);

}  // namespace bacon::dataset
