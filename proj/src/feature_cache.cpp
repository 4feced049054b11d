// Feature cache layout (little-endian, CRC-32 trailer):
//   "GFSFEAT1" | u32 version | u64 count | u32 n_layers, per layer: str id, u64 length |
//   per feature: detection (cx cy h w theta score: f64, anchor: u64), str scene id,
//   u8 shape (255 = none), u8 has_label, u64 label, f64 association iou, layer vectors

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"
#include "graspfs/refiner.hpp"

namespace graspfs {

namespace {

constexpr std::string_view kMagic = "GFSFEAT1";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kNoShape = 255;

}  // namespace

void save_cache(const std::filesystem::path& path, std::span<const RefinedFeatureSet> features) {
  std::vector<std::string> ids;
  std::vector<std::size_t> lengths;
  if (!features.empty()) {
    ids = features.front().layer_ids;
    for (const auto& v : features.front().per_layer) lengths.push_back(v.size());
  }
  io::Writer w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u64(features.size());
  w.u32(static_cast<std::uint32_t>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.str(ids[i]);
    w.u64(lengths[i]);
  }
  for (const auto& f : features) {
    if (f.layer_ids != ids || f.per_layer.size() != ids.size()) {
      throw ConfigError("feature sets in one cache must share layer ids");
    }
    const auto& g = f.detection.grasp;
    for (double v : {g.cx, g.cy, g.h, g.w, g.theta, f.detection.score}) w.f64(v);
    w.u64(f.detection.anchor_index);
    w.str(f.source_scene_id);
    w.u8(f.true_shape ? static_cast<std::uint8_t>(*f.true_shape) : kNoShape);
    w.u8(f.label_index ? 1 : 0);
    w.u64(f.label_index.value_or(0));
    w.f64(f.association_iou);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (f.per_layer[i].size() != lengths[i]) {
        throw ConfigError("layer " + ids[i] + " vector length differs between feature sets");
      }
      w.f64s(f.per_layer[i]);
    }
  }
  io::write_file(path, io::seal(w));
}

std::vector<RefinedFeatureSet> load_cache(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string what = "feature cache " + path.string();
  io::Reader r(io::unseal(bytes, what), what);
  if (r.raw(kMagic.size()) != kMagic) r.fail("not a feature cache");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  const std::uint64_t count = r.u64();
  std::vector<std::string> ids(r.u32());
  std::vector<std::size_t> lengths(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = r.str();
    lengths[i] = r.u64();
  }
  std::vector<RefinedFeatureSet> out;
  for (std::uint64_t n = 0; n < count; ++n) {
    RefinedFeatureSet f;
    auto& g = f.detection.grasp;
    for (double* v : {&g.cx, &g.cy, &g.h, &g.w, &g.theta, &f.detection.score}) *v = r.f64();
    f.detection.anchor_index = r.u64();
    f.source_scene_id = r.str();
    const std::uint8_t shape = r.u8();
    if (shape != kNoShape) {
      if (shape > static_cast<std::uint8_t>(ShapeKind::Ring)) r.fail("bad shape code");
      f.true_shape = static_cast<ShapeKind>(shape);
    }
    const bool has_label = r.u8() != 0;
    const std::uint64_t label = r.u64();
    if (has_label) f.label_index = label;
    f.association_iou = r.f64();
    f.layer_ids = ids;
    for (std::size_t i = 0; i < ids.size(); ++i) f.per_layer.push_back(r.f64s(lengths[i]));
    out.push_back(std::move(f));
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return out;
}

}  // namespace graspfs
