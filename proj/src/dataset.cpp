#include "bacon/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bacon::dataset {

using nlohmann::json;
using scenegen::MultiBaselineFrame;

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_raw(const fs::path& path, const std::vector<std::uint8_t>& bytes, int w, int h, bool rgb) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw Error("failed to write PNG '" + path.string() + "': " + image.message);
}

std::vector<std::uint8_t> read_png_raw(const fs::path& path, bool rgb, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error("cannot read PNG '" + path.string() + "': " + image.message);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("corrupt PNG '" + path.string() + "': " + msg);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return bytes;
}

std::string pair_name(const char* prefix, int i, int j, const char* ext) {
  return std::string(prefix) + "_" + std::to_string(i) + "_" + std::to_string(j) + ext;
}

template <class Fn>
auto field(const std::string& frame, const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const CorruptFrame&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptFrame(frame, name, e.what());
  }
}

}  // namespace

void write_png_rgb(const fs::path& path, const Image& img) {
  if (img.channels() != 3) throw InvalidArgument("write_png_rgb expects 3 channels");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.height()) * img.width() * 3);
  std::size_t i = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) bytes[i++] = to_byte(img(c, y, x));
  write_png_raw(path, bytes, img.width(), img.height(), true);
}

Image read_png_rgb(const fs::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_png_raw(path, true, w, h);
  Image img(3, h, w);
  std::size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = bytes[i++] / 255.0;
  return img;
}

void write_png_gray(const fs::path& path, const Grid<std::uint8_t>& img) {
  std::vector<std::uint8_t> bytes(img.values().begin(), img.values().end());
  write_png_raw(path, bytes, img.width(), img.height(), false);
}

Grid<std::uint8_t> read_png_gray(const fs::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_png_raw(path, false, w, h);
  Grid<std::uint8_t> g(h, w);
  std::copy(bytes.begin(), bytes.end(), g.values().begin());
  return g;
}

void write_png_mask(const fs::path& path, const Mask& mask) {
  Grid<std::uint8_t> g(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) g[i] = mask[i] ? 255 : 0;
  write_png_gray(path, g);
}

Mask read_png_mask(const fs::path& path) {
  Mask m = read_png_gray(path);
  for (auto& v : m.values()) {
    if (v != 0 && v != 255) throw Error("mask PNG '" + path.string() + "' holds values other than 0/255");
    v = v ? 1 : 0;
  }
  return m;
}

void write_pfm(const fs::path& path, const Map& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "Pf\n" << map.width() << " " << map.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(map.width()));
  // PFM scanlines run bottom to top.
  for (int y = map.height() - 1; y >= 0; --y) {
    for (int x = 0; x < map.width(); ++x) {
      float v = static_cast<float>(map(y, x));
      if constexpr (std::endian::native == std::endian::big) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
      row[x] = v;
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Map read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "Pf" || w <= 0 || h <= 0 || scale == 0) throw Error("bad PFM header in '" + path.string() + "'");
  in.get();
  const bool little = scale < 0;
  Map map(h, w);
  std::vector<float> row(static_cast<std::size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float)))
      throw Error("truncated PFM data in '" + path.string() + "'");
    for (int x = 0; x < w; ++x) {
      float v = row[x];
      const bool swap = little != (std::endian::native == std::endian::little);
      if (swap) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
      map(y, x) = v;
    }
  }
  return map;
}

json scene_to_json(const scenegen::SceneSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers)
    layers.push_back({{"rect", {l.x0, l.y0, l.x1, l.y1}}, {"depth", l.depth}, {"texture_seed", l.texture_seed}});
  return {{"background_depth", spec.background_depth},
          {"layers", layers},
          {"focal", spec.focal},
          {"width", spec.width},
          {"height", spec.height},
          {"texture_family", scenegen::to_string(spec.texture_family)}};
}

scenegen::SceneSpec scene_from_json(const json& j) {
  scenegen::SceneSpec spec;
  spec.background_depth = j.at("background_depth").get<double>();
  spec.focal = j.at("focal").get<double>();
  spec.width = j.at("width").get<int>();
  spec.height = j.at("height").get<int>();
  spec.texture_family = scenegen::texture_family_from_string(j.at("texture_family").get<std::string>());
  for (const auto& lj : j.at("layers")) {
    scenegen::Layer l;
    const auto& r = lj.at("rect");
    l.x0 = r.at(0).get<double>();
    l.y0 = r.at(1).get<double>();
    l.x1 = r.at(2).get<double>();
    l.y1 = r.at(3).get<double>();
    l.depth = lj.at("depth").get<double>();
    l.texture_seed = lj.at("texture_seed").get<std::uint64_t>();
    spec.layers.push_back(l);
  }
  return spec;
}

void write_frame(const MultiBaselineFrame& frame, const fs::path& dir) {
  fs::create_directories(dir);
  const int k = frame.n_views();
  for (int v = 0; v < k; ++v) {
    write_png_rgb(dir / ("view_" + std::to_string(v) + ".png"), frame.views[v]);
    write_pfm(dir / ("depth_" + std::to_string(v) + ".pfm"), frame.depth[v]);
  }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      write_pfm(dir / pair_name("disp", i, j, ".pfm"), frame.gt_disparity(i, j));
      write_png_mask(dir / pair_name("occ", i, j, ".png"), frame.gt_occlusion(i, j));
    }
  const json meta = {{"id", frame.id},
                     {"seed", frame.seed},
                     {"focal", frame.focal},
                     {"camera_offsets", frame.camera_offsets},
                     {"n_views", k},
                     {"width", frame.width()},
                     {"height", frame.height()},
                     {"spec", scene_to_json(frame.spec)}};
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
  if (!out) throw Error("failed writing meta.json in '" + dir.string() + "'");
}

MultiBaselineFrame read_frame(const fs::path& dir) {
  const std::string name = dir.filename().string();
  MultiBaselineFrame frame;
  const json meta = field(name, "meta.json", [&] {
    std::ifstream in(dir / "meta.json");
    if (!in) throw Error("missing");
    return json::parse(in);
  });
  field(name, "meta.json", [&] {
    frame.id = meta.at("id").get<std::string>();
    frame.seed = meta.at("seed").get<std::uint64_t>();
    frame.focal = meta.at("focal").get<double>();
    frame.camera_offsets = meta.at("camera_offsets").get<std::vector<double>>();
    frame.spec = scene_from_json(meta.at("spec"));
    return 0;
  });
  const int k = field(name, "n_views", [&] { return meta.at("n_views").get<int>(); });
  const int w = meta.value("width", 0);
  const int h = meta.value("height", 0);
  if (k < 2 || static_cast<int>(frame.camera_offsets.size()) != k)
    throw CorruptFrame(name, "camera_offsets", "view count mismatch");

  auto check_hw = [&](const std::string& f, int hh, int ww) {
    if (hh != h || ww != w) throw CorruptFrame(name, f, "dimensions disagree with meta.json");
  };
  for (int v = 0; v < k; ++v) {
    const std::string vf = "view_" + std::to_string(v) + ".png";
    frame.views.push_back(field(name, vf, [&] { return read_png_rgb(dir / vf); }));
    check_hw(vf, frame.views.back().height(), frame.views.back().width());
    const std::string df = "depth_" + std::to_string(v) + ".pfm";
    frame.depth.push_back(field(name, df, [&] { return read_pfm(dir / df); }));
    check_hw(df, frame.depth.back().height(), frame.depth.back().width());
  }
  frame.disparity.assign(static_cast<std::size_t>(k) * k, Map{});
  frame.occlusion.assign(static_cast<std::size_t>(k) * k, Mask{});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const std::string df = pair_name("disp", i, j, ".pfm");
      const std::string of = pair_name("occ", i, j, ".png");
      Map d = field(name, df, [&] { return read_pfm(dir / df); });
      check_hw(df, d.height(), d.width());
      Mask o = field(name, of, [&] { return read_png_mask(dir / of); });
      check_hw(of, o.height(), o.width());
      frame.disparity[frame.pair_index(i, j)] = std::move(d);
      frame.occlusion[frame.pair_index(i, j)] = std::move(o);
    }
  return frame;
}

void write_dataset(const std::vector<MultiBaselineFrame>& frames, const fs::path& root, const json& extra) {
  fs::create_directories(root);
  json names = json::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05zu", i);
    write_frame(frames[i], root / buf);
    names.push_back(buf);
  }
  json manifest = {{"format", kManifestFormat}, {"n_frames", frames.size()}, {"frames", names}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw Error("failed writing manifest.json");
}

void write_dataset(const std::vector<MultiBaselineFrame>& frames, const fs::path& root) {
  write_dataset(frames, root, json::object());
}

json read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw Error("dataset '" + root.string() + "' has no manifest.json");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed manifest.json in '" + root.string() + "': " + e.what());
  }
  if (m.value("format", "") != kManifestFormat) throw Error("unsupported dataset format in '" + root.string() + "'");
  return m;
}

std::vector<MultiBaselineFrame> read_dataset(const fs::path& root) {
  const json manifest = read_manifest(root);
  std::vector<MultiBaselineFrame> frames;
  for (const auto& n : manifest.at("frames")) frames.push_back(read_frame(root / n.get<std::string>()));
  return frames;
}

}  // namespace bacon::dataset
