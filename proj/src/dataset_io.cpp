#include <sstream>

#include "json.hpp"

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"
#include "graspfs/scene.hpp"

namespace graspfs {

namespace {

using nlohmann::json;

constexpr const char* kManifest = "manifest.jsonl";
constexpr const char* kFormat = "graspfs-dataset";
constexpr int kVersion = 1;

json pose_record(const ObjectPose& p) {
  return json::array({std::string(to_string(p.kind)), p.cx, p.cy, p.rotation, p.scale});
}

json grasp_record(const GraspLabel& g) {
  return json::array({g.rect.cx, g.rect.cy, g.rect.h, g.rect.w, g.rect.theta, g.object_index,
                      std::string(to_string(g.shape))});
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, std::span<const LabeledScene> scenes) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << json{{"format", kFormat}, {"version", kVersion}, {"num_scenes", scenes.size()}}.dump()
           << '\n';
  for (const auto& scene : scenes) {
    if (scene.image.rank() != 3 || scene.image.dim(0) != 1) {
      throw ConfigError("scene " + scene.id + ": image must be 1 x H x W");
    }
    const std::string file = scene.id + ".f32";
    json rec;
    rec["scene_id"] = scene.id;
    rec["seed"] = scene.seed;
    rec["image_file"] = file;
    rec["height"] = scene.image.dim(1);
    rec["width"] = scene.image.dim(2);
    rec["poses"] = json::array();
    for (const auto& p : scene.poses) rec["poses"].push_back(pose_record(p));
    rec["grasps"] = json::array();
    for (const auto& g : scene.grasps) rec["grasps"].push_back(grasp_record(g));
    manifest << rec.dump() << '\n';

    io::Writer w;
    for (double v : scene.image.data()) w.f32(static_cast<float>(v));
    io::write_file(dir / file, w.bytes());
  }
  io::write_file(dir / kManifest, manifest.str());
}

std::vector<LabeledScene> load_dataset(const std::filesystem::path& dir) {
  const std::string text = io::read_file(dir / kManifest);
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) throw FormatError("empty dataset manifest in " + dir.string());
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != kFormat || header.at("version") != kVersion) {
      throw FormatError("unsupported dataset format in " + dir.string());
    }
    expected = header.at("num_scenes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest header: " + std::string(e.what()));
  }

  std::vector<LabeledScene> scenes;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      LabeledScene scene;
      scene.id = rec.at("scene_id").get<std::string>();
      scene.seed = rec.at("seed").get<std::uint64_t>();
      const auto h = rec.at("height").get<std::size_t>();
      const auto w = rec.at("width").get<std::size_t>();
      for (const auto& p : rec.at("poses")) {
        scene.poses.push_back({parse_shape_kind(p.at(0).get<std::string>()), p.at(1).get<double>(),
                               p.at(2).get<double>(), p.at(3).get<double>(), p.at(4).get<double>()});
      }
      for (const auto& g : rec.at("grasps")) {
        GraspLabel label;
        label.rect = {g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>(),
                      g.at(3).get<double>(), g.at(4).get<double>()};
        label.object_index = g.at(5).get<std::size_t>();
        label.shape = parse_shape_kind(g.at(6).get<std::string>());
        scene.grasps.push_back(label);
      }
      const std::string bytes = io::read_file(dir / rec.at("image_file").get<std::string>());
      if (bytes.size() != h * w * 4) {
        throw FormatError("image for scene " + scene.id + " has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(h * w * 4));
      }
      io::Reader r(bytes, scene.id);
      std::vector<double> pixels(h * w);
      for (auto& v : pixels) v = static_cast<double>(r.f32());
      scene.image = Tensor({1, h, w}, std::move(pixels));
      scenes.push_back(std::move(scene));
    } catch (const json::exception& e) {
      throw FormatError("bad dataset manifest record: " + std::string(e.what()));
    }
  }
  if (scenes.size() != expected) {
    throw FormatError("dataset manifest lists " + std::to_string(scenes.size()) +
                      " scenes, header says " + std::to_string(expected));
  }
  return scenes;
}

}  // namespace graspfs
