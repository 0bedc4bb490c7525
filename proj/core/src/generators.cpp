#include "julesz/generators.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "julesz/errors.hpp"
#include "julesz/ops.hpp"

namespace julesz {

namespace {

constexpr char kParamsMagic[4] = {'J', 'Z', 'G', 'P'};
constexpr std::uint32_t kParamsVersion = 1;
constexpr std::size_t kSeedExtent = 4;

const char* kind_name(GeneratorKind kind) {
  return kind == GeneratorKind::texture ? "texture" : "stylizer";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed) {}

  void he(const std::string& name, Shape shape, double fan_in) {
    add(name, normal_tensor(std::move(shape), rng_, std::sqrt(2.0 / fan_in), 0.0, true));
  }
  void constant(const std::string& name, std::size_t n, double value) {
    add(name, Tensor::full({n}, value, true));
  }
  void norm(const std::string& prefix, NormKind kind, std::size_t channels) {
    if (kind == NormKind::none) return;
    constant(prefix + ".norm.scale", channels, 1.0);
    constant(prefix + ".norm.shift", channels, 0.0);
  }

  std::vector<NamedTensor> take() { return std::move(tensors_); }

 private:
  void add(const std::string& name, Tensor t) { tensors_.push_back({name, std::move(t)}); }

  Rng rng_;
  std::vector<NamedTensor> tensors_;
};

std::size_t texture_stages(std::size_t out_size) {
  std::size_t stages = 0;
  for (std::size_t e = kSeedExtent; e < out_size; e *= 2) ++stages;
  return stages;
}

void validate(const GeneratorDescriptor& d) {
  if (!(d.eps > 0.0)) throw std::invalid_argument("generator: eps must be positive");
  if (d.kind == GeneratorKind::texture) {
    if (d.noise_dim == 0 || d.hidden == 0 || d.width == 0) {
      throw std::invalid_argument("texture net: noise_dim, hidden and width must be >= 1");
    }
    if (d.out_size < 8 || d.out_size % kSeedExtent != 0 ||
        !is_power_of_two(d.out_size / kSeedExtent)) {
      throw std::invalid_argument("texture net: out_size must be 4 * 2^k and >= 8, got " +
                                  std::to_string(d.out_size));
    }
  } else {
    if (d.base_channels == 0) throw std::invalid_argument("stylizer: base_channels must be >= 1");
  }
}

// Conv layer whose bias is dropped when a normalization follows (the
// normalization would cancel it).
LayerParams conv_params(const GeneratorParams& g, const std::string& prefix) {
  LayerParams p;
  p.weight = g.at(prefix + ".weight");
  if (g.descriptor.norm == NormKind::none) p.bias = g.at(prefix + ".bias");
  return p;
}

Tensor norm_block(const GeneratorParams& g, const std::string& prefix, const Tensor& x,
                  const ActivationProbe& probe) {
  if (g.descriptor.norm == NormKind::none) return x;
  auto y = normalize(x, g.descriptor.norm, g.descriptor.eps);
  if (probe) probe(prefix, y);
  return scale_bias(y, g.at(prefix + ".norm.scale"), g.at(prefix + ".norm.shift"));
}

}  // namespace

std::string GeneratorDescriptor::canonical() const {
  std::ostringstream out;
  out << "kind=" << kind_name(kind) << ";norm=" << to_string(norm) << ";eps=" << format_double(eps);
  if (kind == GeneratorKind::texture) {
    out << ";noise_dim=" << noise_dim << ";hidden=" << hidden << ";width=" << width
        << ";out_size=" << out_size;
  } else {
    out << ";noise_channels=" << noise_channels << ";base_channels=" << base_channels
        << ";residual_blocks=" << residual_blocks;
  }
  return out.str();
}

GeneratorDescriptor GeneratorDescriptor::parse(const std::string& text) {
  GeneratorDescriptor d;
  std::map<std::string, std::string> fields;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("descriptor: malformed field '" + item + "'");
    fields[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto take = [&](const char* key) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw FormatError(std::string("descriptor: missing '") + key + "'");
    auto value = it->second;
    fields.erase(it);
    return value;
  };
  auto take_size = [&](const char* key) {
    const auto raw = take(key);
    try {
      return static_cast<std::size_t>(std::stoull(raw));
    } catch (const std::exception&) {
      throw FormatError(std::string("descriptor: bad value for '") + key + "'");
    }
  };
  const auto kind = take("kind");
  if (kind == "texture") d.kind = GeneratorKind::texture;
  else if (kind == "stylizer") d.kind = GeneratorKind::stylizer;
  else throw FormatError("descriptor: unknown kind '" + kind + "'");
  try {
    d.norm = parse_norm_kind(take("norm"));
    d.eps = std::stod(take("eps"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("descriptor: ") + e.what());
  }
  if (d.kind == GeneratorKind::texture) {
    d.noise_dim = take_size("noise_dim");
    d.hidden = take_size("hidden");
    d.width = take_size("width");
    d.out_size = take_size("out_size");
  } else {
    d.noise_channels = take_size("noise_channels");
    d.base_channels = take_size("base_channels");
    d.residual_blocks = take_size("residual_blocks");
  }
  if (!fields.empty()) throw FormatError("descriptor: unexpected field '" + fields.begin()->first + "'");
  return d;
}

const Tensor& GeneratorParams::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("generator has no parameter '" + name + "'");
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.size();
  return n;
}

std::vector<Tensor> GeneratorParams::trainable() const {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back(t.tensor);
  return out;
}

std::size_t expected_parameter_count(const GeneratorDescriptor& d) {
  const bool normed = d.norm != NormKind::none;
  // Per-layer extras: conv bias without norm, or scale + shift with norm.
  auto extras = [normed](std::size_t channels) { return normed ? 2 * channels : channels; };
  if (d.kind == GeneratorKind::texture) {
    const auto w = d.width;
    return d.noise_dim * d.hidden + d.hidden + d.hidden * w * 16 + w * 16 +
           texture_stages(d.out_size) * (w * w * 16 + extras(w)) + 3 * w * 9 + 3;
  }
  const auto b = d.base_channels;
  const auto c_in = 3 + d.noise_channels;
  return c_in * b * 9 + extras(b) + b * 2 * b * 9 + extras(2 * b) +
         d.residual_blocks * 2 * (4 * b * b * 9 + extras(2 * b)) + 2 * b * b * 16 + extras(b) +
         b * 3 * 16 + 3;
}

GeneratorParams build_generator(const GeneratorDescriptor& d, std::uint64_t seed) {
  validate(d);
  Builder b(seed);
  const bool normed = d.norm != NormKind::none;
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    b.he(name + ".weight", {out, in, k, k}, static_cast<double>(in * k * k));
    if (!normed) b.constant(name + ".bias", out, 0.0);
    b.norm(name, d.norm, out);
  };
  auto up = [&](const std::string& name, std::size_t in, std::size_t out) {
    // k=4, stride 2: each output pixel sees in * 4 taps.
    b.he(name + ".weight", {in, out, 4, 4}, static_cast<double>(in * 4));
    if (!normed) b.constant(name + ".bias", out, 0.0);
    b.norm(name, d.norm, out);
  };

  if (d.kind == GeneratorKind::texture) {
    const auto w = d.width;
    b.he("fc1.weight", {d.hidden, d.noise_dim}, static_cast<double>(d.noise_dim));
    b.constant("fc1.bias", d.hidden, 0.0);
    b.he("fc2.weight", {w * 16, d.hidden}, static_cast<double>(d.hidden));
    b.constant("fc2.bias", w * 16, 0.0);
    for (std::size_t s = 0; s < texture_stages(d.out_size); ++s) {
      up("up" + std::to_string(s), w, w);
    }
    b.he("out.weight", {3, w, 3, 3}, static_cast<double>(w * 9));
    b.constant("out.bias", 3, 0.0);
  } else {
    const auto c = d.base_channels;
    conv("down1", c, 3 + d.noise_channels, 3);
    conv("down2", 2 * c, c, 3);
    for (std::size_t r = 0; r < d.residual_blocks; ++r) {
      conv("res" + std::to_string(r) + ".a", 2 * c, 2 * c, 3);
      conv("res" + std::to_string(r) + ".b", 2 * c, 2 * c, 3);
    }
    up("up1", 2 * c, c);
    b.he("out.weight", {c, 3, 4, 4}, static_cast<double>(c * 4));
    b.constant("out.bias", 3, 0.0);
  }
  GeneratorParams g{d, b.take()};
  if (g.parameter_count() != expected_parameter_count(d)) {
    throw std::logic_error("generator: built parameter count disagrees with descriptor");
  }
  return g;
}

GeneratorParams build_texture_net(std::size_t noise_dim, std::size_t out_size, NormKind norm,
                                  std::uint64_t seed, std::size_t hidden, std::size_t width) {
  GeneratorDescriptor d;
  d.kind = GeneratorKind::texture;
  d.norm = norm;
  d.noise_dim = noise_dim;
  d.out_size = out_size;
  d.hidden = hidden;
  d.width = width;
  return build_generator(d, seed);
}

GeneratorParams build_stylizer(NormKind norm, std::size_t noise_channels, std::uint64_t seed,
                               std::size_t base_channels, std::size_t residual_blocks) {
  GeneratorDescriptor d;
  d.kind = GeneratorKind::stylizer;
  d.norm = norm;
  d.noise_channels = noise_channels;
  d.base_channels = base_channels;
  d.residual_blocks = residual_blocks;
  return build_generator(d, seed);
}

Tensor forward_texture(const GeneratorParams& g, const Tensor& z, const ActivationProbe& probe) {
  const auto& d = g.descriptor;
  if (d.kind != GeneratorKind::texture) throw std::invalid_argument("forward_texture: not a texture net");
  if (z.rank() != 2 || z.dim(1) != d.noise_dim) {
    throw ShapeError("forward_texture: noise must be N x " + std::to_string(d.noise_dim) +
                     ", got " + shape_str(z.shape()));
  }
  const auto N = z.dim(0);
  auto h = relu(linear(z, {g.at("fc1.weight"), g.at("fc1.bias")}));
  h = linear(h, {g.at("fc2.weight"), g.at("fc2.bias")});
  h = reshape(h, {N, d.width, kSeedExtent, kSeedExtent});
  for (std::size_t s = 0; s < texture_stages(d.out_size); ++s) {
    const auto name = "up" + std::to_string(s);
    h = conv_transpose2d(h, conv_params(g, name), 2, 1);
    h = relu(norm_block(g, name, h, probe));
  }
  return conv2d(h, {g.at("out.weight"), g.at("out.bias")}, 1, 1);
}

Tensor forward_stylized(const GeneratorParams& g, const Tensor& x0, const Tensor& z,
                        const ActivationProbe& probe) {
  const auto& d = g.descriptor;
  if (d.kind != GeneratorKind::stylizer) throw std::invalid_argument("forward_stylized: not a stylizer");
  if (x0.rank() != 4 || x0.dim(1) != 3 || x0.dim(2) % 4 != 0 || x0.dim(3) % 4 != 0) {
    throw ShapeError("forward_stylized: content must be N x 3 x H x W with H, W multiples of 4, got " +
                     shape_str(x0.shape()));
  }
  Tensor input = x0;
  if (d.noise_channels > 0) {
    if (!z.defined() || z.shape() != Shape{x0.dim(0), d.noise_channels, x0.dim(2), x0.dim(3)}) {
      throw ShapeError("forward_stylized: noise must be " +
                       shape_str({x0.dim(0), d.noise_channels, x0.dim(2), x0.dim(3)}));
    }
    const std::vector<Tensor> parts{x0, z};
    input = concat(parts, 1);
  }
  auto block = [&](const std::string& name, const Tensor& x, std::size_t stride) {
    return norm_block(g, name, conv2d(x, conv_params(g, name), stride, 1), probe);
  };
  auto h = relu(block("down1", input, 2));
  h = relu(block("down2", h, 2));
  for (std::size_t r = 0; r < d.residual_blocks; ++r) {
    const auto prefix = "res" + std::to_string(r);
    auto branch = relu(block(prefix + ".a", h, 1));
    branch = block(prefix + ".b", branch, 1);
    h = h + branch;
  }
  h = conv_transpose2d(h, conv_params(g, "up1"), 2, 1);
  h = relu(norm_block(g, "up1", h, probe));
  return conv_transpose2d(h, {g.at("out.weight"), g.at("out.bias")}, 2, 1);
}

Tensor sample_noise(const GeneratorDescriptor& d, std::size_t n, Rng& rng, std::size_t extent) {
  if (d.kind == GeneratorKind::texture) return normal_tensor({n, d.noise_dim}, rng);
  if (d.noise_channels == 0) return {};
  if (extent == 0) throw std::invalid_argument("sample_noise: stylizer noise needs an extent");
  return normal_tensor({n, d.noise_channels, extent, extent}, rng);
}

void save_params(const GeneratorParams& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kParamsMagic, 4);
  binary::put_u32(out, kParamsVersion);
  binary::put_bytes(out, g.descriptor.canonical());
  binary::put_u32(out, static_cast<std::uint32_t>(g.tensors.size()));
  for (const auto& [name, t] : g.tensors) {
    binary::put_bytes(out, name);
    binary::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) binary::put_u64(out, extent);
    for (double v : t.values()) binary::put_f64(out, v);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

GeneratorParams load_params(const std::filesystem::path& path, const GeneratorDescriptor* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto where = path.string() + ": ";
  char magic[4];
  binary::read_exact(in, magic, 4, "parameter file magic");
  if (!std::equal(magic, magic + 4, kParamsMagic)) throw FormatError(where + "not a parameter file");
  if (const auto version = binary::get_u32(in, "version"); version != kParamsVersion) {
    throw FormatError(where + "unsupported parameter file version " + std::to_string(version));
  }
  const auto descriptor = GeneratorDescriptor::parse(binary::get_bytes(in, 4096, "descriptor"));
  if (expected && !(descriptor == *expected)) {
    throw FormatError(where + "architecture mismatch: file has '" + descriptor.canonical() +
                      "', expected '" + expected->canonical() + "'");
  }
  // The skeleton fixes the names and shapes the file must contain.
  auto params = build_generator(descriptor, 0);
  const auto count = binary::get_u32(in, "tensor count");
  if (count != params.tensors.size()) {
    throw FormatError(where + "expected " + std::to_string(params.tensors.size()) +
                      " tensors, file has " + std::to_string(count));
  }
  std::vector<NamedTensor> loaded;
  for (const auto& slot : params.tensors) {
    const auto name = binary::get_bytes(in, 256, "tensor name");
    if (name != slot.name) throw FormatError(where + "unexpected tensor '" + name + "'");
    const auto rank = binary::get_u32(in, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = binary::get_u64(in, "extent");
    if (shape != slot.tensor.shape()) {
      throw FormatError(where + "tensor '" + name + "' has shape " + shape_str(shape) +
                        ", expected " + shape_str(slot.tensor.shape()));
    }
    std::vector<double> values(slot.tensor.size());
    for (auto& v : values) v = binary::get_f64(in, "tensor values");
    loaded.push_back({name, Tensor(shape, std::move(values), true)});
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(where + "trailing bytes");
  params.tensors = std::move(loaded);
  return params;
}

}  // namespace julesz
