#include "owdetr/detector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace owdetr {

namespace {

enum ParamIndex : std::size_t {
  kConv1W, kConv1B, kConv2W, kConv2B,
  kProjW, kProjB,
  kQueries, kAttnQ, kAttnK, kAttnV, kAttnO, kFfn1W, kFfn1B, kFfn2W, kFfn2B,
  kNorm1G, kNorm1B, kNorm2G, kNorm2B,
  kClsW, kClsB,
  kBinW, kBinB,
  kReg1W, kReg1B, kReg2W, kReg2B, kReg3W, kReg3B,
  kParamCount,
};

constexpr char kMagic[8] = {'O', 'W', 'D', 'E', 'T', 'R', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
// Initial box size before any regression is learned.
constexpr double kInitialBoxSide = 0.27;

double prior_bias(double prior) { return -std::log((1.0 - prior) / prior); }

using Index = std::shared_ptr<const std::vector<std::ptrdiff_t>>;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

void check_finite(const Tensor& t, const char* what) {
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::runtime_error(std::string("detector: non-finite ") + what + " at flat index " +
                               std::to_string(i) + " of " + shape_string(t.shape()));
    }
  }
}

}  // namespace

// ---- config ------------------------------------------------------------------

void DetectorConfig::validate() const {
  if (patch == 0 || image_size % (patch * 2) != 0) {
    throw std::invalid_argument("detector config: image_size must be a multiple of 2*patch");
  }
  if (stem_channels == 0 || backbone_channels == 0 || ffn_dim == 0 || num_queries == 0) {
    throw std::invalid_argument("detector config: zero-sized layer");
  }
  if (model_dim < 4 || model_dim % 4 != 0) {
    throw std::invalid_argument("detector config: model_dim must be a positive multiple of 4");
  }
  if (num_known == 0) throw std::invalid_argument("detector config: num_known must be >= 1");
  if (!(class_prior > 0 && class_prior < 1)) {
    throw std::invalid_argument("detector config: class_prior must lie in (0,1)");
  }
}

std::string to_string(Component c) {
  switch (c) {
    case Component::backbone: return "backbone";
    case Component::projection: return "projection";
    case Component::decoder: return "decoder";
    case Component::class_head: return "class_head";
    case Component::binary_head: return "binary_head";
    case Component::regression_head: return "regression_head";
  }
  return "?";
}

FreezePolicy FreezePolicy::all() {
  FreezePolicy p;
  p.frozen.fill(true);
  return p;
}

FreezePolicy FreezePolicy::stage2() {
  FreezePolicy p;
  p.set(Component::backbone, true);
  p.set(Component::decoder, true);
  p.set(Component::regression_head, true);
  return p;
}

// ---- constants -----------------------------------------------------------------

struct Detector::Constants {
  Index patches;        // image -> (grid1^2) x (patch^2 * 3)
  Index conv3x3;        // stem map -> (grid1^2) x (9 * stem)
  std::array<Index, 4> pool;
  Index ref_pad;        // N x 2 -> N x 4, zero-padded
  Tensor centering;     // d x d, I - 1/d
  Tensor ones_col;      // N x 1
  Tensor ones_row;      // 1 x d
  Tensor pos_enc;       // tokens x d
  Tensor centers;       // tokens x 2
};

void Detector::build_constants() {
  const auto& c = config_;
  const std::size_t s = c.image_size;
  const std::size_t g1 = s / c.patch;
  const std::size_t g2 = c.grid();
  auto k = std::make_shared<Constants>();

  auto patches = std::make_shared<std::vector<std::ptrdiff_t>>();
  patches->reserve(g1 * g1 * c.patch * c.patch * 3);
  for (std::size_t gy = 0; gy < g1; ++gy)
    for (std::size_t gx = 0; gx < g1; ++gx)
      for (std::size_t dy = 0; dy < c.patch; ++dy)
        for (std::size_t dx = 0; dx < c.patch; ++dx)
          for (std::size_t ch = 0; ch < 3; ++ch)
            patches->push_back(static_cast<std::ptrdiff_t>(
                ((gy * c.patch + dy) * s + gx * c.patch + dx) * 3 + ch));
  k->patches = patches;

  auto conv = std::make_shared<std::vector<std::ptrdiff_t>>();
  conv->reserve(g1 * g1 * 9 * c.stem_channels);
  const auto sg1 = static_cast<std::ptrdiff_t>(g1);
  for (std::ptrdiff_t y = 0; y < sg1; ++y)
    for (std::ptrdiff_t x = 0; x < sg1; ++x)
      for (std::ptrdiff_t ky = -1; ky <= 1; ++ky)
        for (std::ptrdiff_t kx = -1; kx <= 1; ++kx)
          for (std::size_t ch = 0; ch < c.stem_channels; ++ch) {
            const std::ptrdiff_t yy = y + ky, xx = x + kx;
            if (yy < 0 || xx < 0 || yy >= sg1 || xx >= sg1) {
              conv->push_back(-1);
            } else {
              conv->push_back((yy * sg1 + xx) * static_cast<std::ptrdiff_t>(c.stem_channels) +
                              static_cast<std::ptrdiff_t>(ch));
            }
          }
  k->conv3x3 = conv;

  for (std::size_t q = 0; q < 4; ++q) {
    auto pool = std::make_shared<std::vector<std::ptrdiff_t>>();
    pool->reserve(g2 * g2 * c.backbone_channels);
    for (std::size_t y = 0; y < g2; ++y)
      for (std::size_t x = 0; x < g2; ++x)
        for (std::size_t ch = 0; ch < c.backbone_channels; ++ch)
          pool->push_back(static_cast<std::ptrdiff_t>(
              ((2 * y + q / 2) * g1 + 2 * x + q % 2) * c.backbone_channels + ch));
    k->pool[q] = pool;
  }

  auto pad = std::make_shared<std::vector<std::ptrdiff_t>>();
  for (std::size_t i = 0; i < c.num_queries; ++i) {
    pad->push_back(static_cast<std::ptrdiff_t>(2 * i));
    pad->push_back(static_cast<std::ptrdiff_t>(2 * i + 1));
    pad->push_back(-1);
    pad->push_back(-1);
  }
  k->ref_pad = pad;

  {
    const std::size_t d = c.model_dim;
    std::vector<double> centering(d * d, -1.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) centering[i * d + i] += 1.0;
    k->centering = Tensor::matrix(d, d, std::move(centering));
    k->ones_col = Tensor::full({c.num_queries, 1}, 1.0);
    k->ones_row = Tensor::full({1, d}, 1.0);
  }

  // 2-D sine encoding: first half of the channels encodes x, second half y.
  const std::size_t d = c.model_dim;
  const std::size_t quarter = d / 4;
  std::vector<double> pe(g2 * g2 * d);
  std::vector<double> centers(g2 * g2 * 2);
  for (std::size_t y = 0; y < g2; ++y) {
    for (std::size_t x = 0; x < g2; ++x) {
      const std::size_t t = y * g2 + x;
      const double cx = (static_cast<double>(x) + 0.5) / static_cast<double>(g2);
      const double cy = (static_cast<double>(y) + 0.5) / static_cast<double>(g2);
      centers[t * 2] = cx;
      centers[t * 2 + 1] = cy;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double freq = std::pow(100.0, -static_cast<double>(i) / quarter);
        const double ax = 2 * std::numbers::pi * cx * freq * g2 / 2;
        const double ay = 2 * std::numbers::pi * cy * freq * g2 / 2;
        pe[t * d + 2 * i] = std::sin(ax);
        pe[t * d + 2 * i + 1] = std::cos(ax);
        pe[t * d + d / 2 + 2 * i] = std::sin(ay);
        pe[t * d + d / 2 + 2 * i + 1] = std::cos(ay);
      }
    }
  }
  k->pos_enc = Tensor::matrix(g2 * g2, d, std::move(pe));
  k->centers = Tensor::matrix(g2 * g2, 2, std::move(centers));
  constants_ = std::move(k);
}

// ---- construction --------------------------------------------------------------

Detector::Detector(DetectorConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  const std::size_t d = c.model_dim;

  auto xavier = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> v(fan_in * fan_out);
    for (double& x : v) x = u(rng);
    return v;
  };
  auto add = [&](std::string name, Component comp, Shape shape, std::vector<double> v) {
    params_.push_back({std::move(name), comp, Tensor(std::move(shape), std::move(v), true)});
  };
  auto add_linear = [&](const std::string& name, Component comp, std::size_t in,
                        std::size_t out) {
    add(name + ".weight", comp, {in, out}, xavier(in, out));
    add(name + ".bias", comp, {out}, std::vector<double>(out, 0.0));
  };

  const std::size_t patch_in = c.patch * c.patch * 3;
  add_linear("backbone.conv1", Component::backbone, patch_in, c.stem_channels);
  add_linear("backbone.conv2", Component::backbone, 9 * c.stem_channels, c.backbone_channels);
  add_linear("projection", Component::projection, c.backbone_channels, d);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> queries(c.num_queries * d);
  for (double& x : queries) x = normal(rng);
  add("decoder.queries", Component::decoder, {c.num_queries, d}, std::move(queries));
  add("decoder.attn_q", Component::decoder, {d, d}, xavier(d, d));
  add("decoder.attn_k", Component::decoder, {d, d}, xavier(d, d));
  add("decoder.attn_v", Component::decoder, {d, d}, xavier(d, d));
  add("decoder.attn_o", Component::decoder, {d, d}, xavier(d, d));
  add_linear("decoder.ffn1", Component::decoder, d, c.ffn_dim);
  add_linear("decoder.ffn2", Component::decoder, c.ffn_dim, d);
  for (const char* norm : {"decoder.norm1", "decoder.norm2"}) {
    add(std::string(norm) + ".weight", Component::decoder, {1, d}, std::vector<double>(d, 1.0));
    add(std::string(norm) + ".bias", Component::decoder, {d}, std::vector<double>(d, 0.0));
  }

  const std::size_t slots = c.num_known + 1;
  const double bias = prior_bias(c.class_prior);
  add("class_head.weight", Component::class_head, {slots, d}, xavier(d, slots));
  add("class_head.bias", Component::class_head, {slots}, std::vector<double>(slots, bias));
  add("binary_head.weight", Component::binary_head, {d, 1}, xavier(d, 1));
  add("binary_head.bias", Component::binary_head, {1}, {bias});

  add_linear("regression_head.fc1", Component::regression_head, d, d);
  add_linear("regression_head.fc2", Component::regression_head, d, d);
  add("regression_head.fc3.weight", Component::regression_head, {d, 4},
      std::vector<double>(d * 4, 0.0));
  const double side = std::log(kInitialBoxSide / (1 - kInitialBoxSide));
  add("regression_head.fc3.bias", Component::regression_head, {4}, {0.0, 0.0, side, side});

  if (params_.size() != kParamCount) throw std::logic_error("detector: parameter table size");
  build_constants();
}

const Parameter& Detector::parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("detector: no parameter named " + name);
}

// ---- forward -----------------------------------------------------------------

DetectorOutput Detector::forward(const Raster& image) const {
  const auto& c = config_;
  const auto s = static_cast<int>(c.image_size);
  if (image.width != s || image.height != s || image.rgb.size() != c.image_size * c.image_size * 3) {
    throw std::invalid_argument("detector: expected a " + std::to_string(s) + "x" +
                                std::to_string(s) + " RGB raster, got " +
                                std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  const auto& k = *constants_;
  const std::size_t g1 = c.image_size / c.patch;
  const std::size_t tokens = c.tokens();
  const std::size_t n = c.num_queries;
  const std::size_t d = c.model_dim;

  std::vector<double> pixels(image.rgb.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = image.rgb[i] / 255.0 - 0.5;
  const Tensor input = Tensor::vector(std::move(pixels));

  // Backbone.
  Tensor x = gather(input, k.patches, {g1 * g1, c.patch * c.patch * 3});
  x = relu(add_row(matmul(x, p(kConv1W)), p(kConv1B)));
  x = gather(x, k.conv3x3, {g1 * g1, 9 * c.stem_channels});
  x = relu(add_row(matmul(x, p(kConv2W)), p(kConv2B)));
  const Shape pooled{tokens, c.backbone_channels};
  x = (gather(x, k.pool[0], pooled) + gather(x, k.pool[1], pooled) +
       gather(x, k.pool[2], pooled) + gather(x, k.pool[3], pooled)) * 0.25;

  const Tensor f = add_row(matmul(x, p(kProjW)), p(kProjB));

  // Decoder.
  const Tensor mem = f + k.pos_enc;
  const Tensor& qe = p(kQueries);
  const Tensor q = matmul(qe, p(kAttnQ));
  const Tensor key = matmul(mem, p(kAttnK));
  const Tensor v = matmul(f, p(kAttnV));
  const Tensor attn = softmax(matmul(q, transpose(key)) * (1.0 / std::sqrt(static_cast<double>(d))));
  // Content starts empty; the learned queries only steer where each slot attends.
  auto layer_norm = [&](const Tensor& x, std::size_t gain, std::size_t shift) {
    const Tensor centered = matmul(x, k.centering);
    const Tensor var = sum_rows(square(centered)) * (1.0 / static_cast<double>(d));
    const Tensor inv_std = matmul(pow(var + 1e-5, -0.5), k.ones_row);
    return add_row(centered * inv_std * matmul(k.ones_col, p(gain)), p(shift));
  };
  Tensor h = layer_norm(matmul(matmul(attn, v), p(kAttnO)), kNorm1G, kNorm1B);
  const Tensor ffn = add_row(matmul(relu(add_row(matmul(h, p(kFfn1W)), p(kFfn1B))), p(kFfn2W)),
                             p(kFfn2B));
  h = layer_norm(h + ffn, kNorm2G, kNorm2B);

  // Heads.
  const Tensor class_logits = add_row(matmul(h, transpose(p(kClsW))), p(kClsB));
  const Tensor binary_logits = add_row(matmul(h, p(kBinW)), p(kBinB));

  const Tensor ref = matmul(attn, k.centers);
  const Tensor ref_logit = gather(log(ref) - log(1.0 - ref), k.ref_pad, {n, 4});
  Tensor r = relu(add_row(matmul(h, p(kReg1W)), p(kReg1B)));
  r = relu(add_row(matmul(r, p(kReg2W)), p(kReg2B)));
  r = add_row(matmul(r, p(kReg3W)), p(kReg3B));
  const Tensor boxes = sigmoid(r + ref_logit);

  check_finite(f, "feature grid");
  check_finite(class_logits, "class logits");
  check_finite(binary_logits, "binary logits");
  check_finite(boxes, "boxes");

  DetectorOutput out;
  out.heads.class_logits = class_logits;
  out.heads.binary_logits = binary_logits;
  out.heads.boxes = boxes;
  out.heads.query_features = h;
  out.features = f;
  return out;
}

// ---- training state -------------------------------------------------------------

void Detector::apply_freeze(const FreezePolicy& policy) {
  policy_ = policy;
  for (auto& param : params_) {
    param.value.zero_grad();
    param.value.set_requires_grad(!policy_.is_frozen(param.component));
  }
}

void Detector::expand_class_head(std::size_t new_known, std::uint64_t seed) {
  const std::size_t old_known = config_.num_known;
  if (new_known <= old_known) {
    throw std::invalid_argument("expand_class_head: class count must grow (" +
                                std::to_string(old_known) + " -> " +
                                std::to_string(new_known) + ")");
  }
  const std::size_t d = config_.model_dim;
  const auto old_w = params_[kClsW].value.values();
  const auto old_b = params_[kClsB].value.values();
  std::vector<double> w, b;
  w.reserve((new_known + 1) * d);
  b.reserve(new_known + 1);
  w.insert(w.end(), old_w.begin(), old_w.begin() + static_cast<std::ptrdiff_t>(old_known * d));
  b.insert(b.end(), old_b.begin(), old_b.begin() + static_cast<std::ptrdiff_t>(old_known));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (std::size_t i = old_known; i < new_known; ++i) {
    for (std::size_t j = 0; j < d; ++j) w.push_back(normal(rng));
    b.push_back(prior_bias(config_.class_prior));
  }
  w.insert(w.end(), old_w.begin() + static_cast<std::ptrdiff_t>(old_known * d), old_w.end());
  b.push_back(old_b[old_known]);

  const bool grad = !policy_.is_frozen(Component::class_head);
  params_[kClsW].value = Tensor({new_known + 1, d}, std::move(w), grad);
  params_[kClsB].value = Tensor({new_known + 1}, std::move(b), grad);
  config_.num_known = new_known;
}

Detector Detector::snapshot_teacher() const {
  Detector copy;
  copy.config_ = config_;
  copy.constants_ = constants_;
  copy.policy_ = FreezePolicy::all();
  copy.params_.reserve(params_.size());
  for (const auto& p : params_) copy.params_.push_back({p.name, p.component, p.value.detach()});
  return copy;
}

Detector Detector::clone() const {
  Detector copy = snapshot_teacher();
  copy.apply_freeze(policy_);
  return copy;
}

std::uint64_t Detector::component_hash(Component c) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    if (p.component != c) continue;
    const auto v = p.value.values();
    h = fnv1a(h, v.data(), v.size() * sizeof(double));
  }
  return h;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint " + path.string() + ": truncated file");
  return v;
}

std::uint64_t read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint " + path.string() + ": unsupported version " +
                          std::to_string(version));
  }
  return get<std::uint64_t>(is, path);
}

}  // namespace

void Detector::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint " + path.string() + ": cannot open for writing");
  os.write(kMagic, 8);
  put(os, kCheckpointVersion);
  put(os, config_hash);
  const auto& c = config_;
  for (std::uint64_t v : {c.image_size, c.patch, c.stem_channels, c.backbone_channels,
                          c.model_dim, c.ffn_dim, c.num_queries, c.num_known}) {
    put(os, v);
  }
  put(os, c.class_prior);
  put(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(os, static_cast<std::uint8_t>(p.component));
    const auto& shape = p.value.shape();
    put(os, static_cast<std::uint32_t>(shape.size()));
    for (std::uint64_t dim : shape) put(os, dim);
    const auto v = p.value.values();
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("checkpoint " + path.string() + ": write failed");
}

std::uint64_t Detector::read_config_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint " + path.string() + ": cannot open");
  return read_header(is, path);
}

Detector Detector::load(const std::filesystem::path& path, std::uint64_t expected_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint " + path.string() + ": cannot open");
  const std::uint64_t hash = read_header(is, path);
  if (hash != expected_hash) {
    throw CheckpointError("checkpoint " + path.string() + ": config hash mismatch");
  }
  DetectorConfig c;
  c.image_size = get<std::uint64_t>(is, path);
  c.patch = get<std::uint64_t>(is, path);
  c.stem_channels = get<std::uint64_t>(is, path);
  c.backbone_channels = get<std::uint64_t>(is, path);
  c.model_dim = get<std::uint64_t>(is, path);
  c.ffn_dim = get<std::uint64_t>(is, path);
  c.num_queries = get<std::uint64_t>(is, path);
  c.num_known = get<std::uint64_t>(is, path);
  c.class_prior = get<double>(is, path);

  Detector model(c, 0);
  const auto count = get<std::uint32_t>(is, path);
  if (count != model.params_.size()) {
    throw CheckpointError("checkpoint " + path.string() + ": parameter count mismatch");
  }
  for (auto& p : model.params_) {
    const auto len = get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto comp = get<std::uint8_t>(is, path);
    if (!is || name != p.name || comp != static_cast<std::uint8_t>(p.component)) {
      throw CheckpointError("checkpoint " + path.string() + ": unexpected parameter '" + name +
                            "', wanted '" + p.name + "'");
    }
    const auto ndim = get<std::uint32_t>(is, path);
    Shape shape(ndim);
    for (auto& dim : shape) dim = get<std::uint64_t>(is, path);
    if (shape != p.value.shape()) {
      throw CheckpointError("checkpoint " + path.string() + ": shape mismatch for " + p.name);
    }
    auto dst = p.value.mutable_values();
    is.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint " + path.string() + ": truncated file");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("checkpoint " + path.string() + ": trailing bytes");
  }
  return model;
}

// ---- optimizer --------------------------------------------------------------------

Optimizer::Optimizer(Kind kind, double weight_decay, double clip_norm)
    : kind_(kind), weight_decay_(weight_decay), clip_norm_(clip_norm) {
  if (!(weight_decay >= 0) || !(clip_norm >= 0)) {
    throw std::invalid_argument("optimizer: weight_decay and clip_norm must be >= 0");
  }
}

Optimizer::Kind Optimizer::parse(const std::string& name) {
  if (name == "sgd") return Kind::sgd;
  if (name == "adam") return Kind::adam;
  throw std::invalid_argument("optimizer: unknown kind '" + name + "' (sgd|adam)");
}

void Optimizer::step(Detector& model, double learning_rate) {
  auto& params = model.parameters();
  if (state_.size() != params.size()) state_.assign(params.size(), {});
  ++steps_;

  double scale_factor = 1.0;
  if (clip_norm_ > 0) {
    double sq = 0;
    for (const auto& p : params) {
      if (!model.trainable(p) || !p.value.has_grad()) continue;
      for (double g : p.value.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) scale_factor = clip_norm_ / norm;
  }

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!model.trainable(p) || !p.value.has_grad()) {
      p.value.zero_grad();
      continue;
    }
    auto v = p.value.mutable_values();
    const auto g = p.value.grad();
    if (kind_ == Kind::sgd) {
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] -= learning_rate * (g[j] * scale_factor + weight_decay_ * v[j]);
      }
    } else {
      auto& st = state_[i];
      if (st.m.size() != v.size()) {
        st.m.assign(v.size(), 0.0);
        st.v.assign(v.size(), 0.0);
      }
      for (std::size_t j = 0; j < v.size(); ++j) {
        const double gj = g[j] * scale_factor;
        st.m[j] = b1 * st.m[j] + (1 - b1) * gj;
        st.v[j] = b2 * st.v[j] + (1 - b2) * gj * gj;
        v[j] -= learning_rate * ((st.m[j] / c1) / (std::sqrt(st.v[j] / c2) + eps) +
                                 weight_decay_ * v[j]);
      }
    }
    p.value.zero_grad();
  }
}

}  // namespace owdetr
