// Checkpoint layout (little-endian, CRC-32 trailer):
//   "GFSCKPT1" | u32 version | arch | u32 n_specs, specs | u32 n_blocks,
//   per block: str name, weights (u32 rank, u64 dims, f64 data), bias (same)

#include "graspfs/binary_io.hpp"
#include "graspfs/detector.hpp"
#include "graspfs/errors.hpp"

namespace graspfs {

namespace {

constexpr std::string_view kMagic = "GFSCKPT1";
constexpr std::uint32_t kVersion = 1;

void write_tensor(io::Writer& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  w.f64s(t.values());
}

Tensor read_tensor(io::Reader& r) {
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 4) r.fail("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = r.u64();
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0 || n > r.remaining() / d) r.fail("tensor extent exceeds file");
    n *= d;
  }
  return Tensor(shape, r.f64s(n));
}

void write_spec(io::Writer& w, const LayerSpec& s) {
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.str(s.layer_id);
  for (std::size_t v : {s.in_channels, s.out_channels, s.kernel_size, s.padding, s.stride, s.window}) {
    w.u64(v);
  }
}

LayerSpec read_spec(io::Reader& r) {
  LayerSpec s;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(LayerKind::MaxPool)) r.fail("unknown layer kind");
  s.kind = static_cast<LayerKind>(kind);
  s.layer_id = r.str();
  for (std::size_t* v : {&s.in_channels, &s.out_channels, &s.kernel_size, &s.padding, &s.stride,
                         &s.window}) {
    *v = r.u64();
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DetectorNetwork& detector) {
  const DetectorArch& a = detector.arch();
  const Network& net = detector.network();
  io::Writer w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u64(a.image_size);
  w.u32(static_cast<std::uint32_t>(a.stages.size()));
  for (const auto& stage : a.stages) {
    w.u32(static_cast<std::uint32_t>(stage.size()));
    for (std::size_t c : stage) w.u64(c);
  }
  w.u64(a.kernel_size);
  w.u32(static_cast<std::uint32_t>(a.anchor_scales.size()));
  w.f64s(a.anchor_scales);
  w.u32(static_cast<std::uint32_t>(a.anchor_aspects.size()));
  w.f64s(a.anchor_aspects);

  w.u32(static_cast<std::uint32_t>(net.backbone().size() + net.heads().size()));
  for (const auto& s : net.backbone()) write_spec(w, s);
  for (const auto& s : net.heads()) write_spec(w, s);

  w.u32(static_cast<std::uint32_t>(net.num_param_blocks()));
  for (std::size_t b = 0; b < net.num_param_blocks(); ++b) {
    w.str(net.block_name(b));
    write_tensor(w, net.params(b).weights);
    write_tensor(w, net.params(b).bias);
  }
  io::write_file(path, io::seal(w));
}

DetectorNetwork load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string what = "checkpoint " + path.string();
  io::Reader r(io::unseal(bytes, what), what);
  if (r.raw(kMagic.size()) != kMagic) r.fail("not a detector checkpoint");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported version " + std::to_string(v));

  DetectorArch a;
  a.image_size = r.u64();
  a.stages.assign(r.u32(), {});
  for (auto& stage : a.stages) {
    stage.assign(r.u32(), 0);
    for (auto& c : stage) c = r.u64();
  }
  a.kernel_size = r.u64();
  a.anchor_scales = r.f64s(r.u32());
  a.anchor_aspects = r.f64s(r.u32());

  DetectorNetwork det = [&] {
    try {
      return DetectorNetwork(a);
    } catch (const ConfigError& e) {
      r.fail(std::string("invalid architecture: ") + e.what());
    }
  }();
  Network& net = det.mutable_network();

  std::vector<LayerSpec> expected = net.backbone();
  expected.insert(expected.end(), net.heads().begin(), net.heads().end());
  const std::uint32_t n_specs = r.u32();
  if (n_specs != expected.size()) r.fail("layer count does not match architecture");
  for (const auto& e : expected) {
    if (read_spec(r) != e) r.fail("layer " + e.layer_id + " does not match architecture");
  }

  if (r.u32() != net.num_param_blocks()) r.fail("parameter block count mismatch");
  for (std::size_t b = 0; b < net.num_param_blocks(); ++b) {
    if (r.str() != net.block_name(b)) r.fail("parameter block " + net.block_name(b) + " out of order");
    Tensor weights = read_tensor(r);
    Tensor bias = read_tensor(r);
    ConvParams& p = net.mutable_params(b);
    if (weights.shape() != p.weights.shape() || bias.shape() != p.bias.shape()) {
      r.fail("parameter block " + net.block_name(b) + " has the wrong shape");
    }
    p.weights = std::move(weights);
    p.bias = std::move(bias);
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return det;
}

}  // namespace graspfs
