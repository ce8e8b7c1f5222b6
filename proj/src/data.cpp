#include "dat/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "glyphs.hpp"

namespace dat {
namespace fs = std::filesystem;

Labels DatasetHandle::batch_labels(std::span<const std::size_t> rows) const {
  Labels out;
  if (labels.empty()) return out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels.at(r));
  return out;
}

std::vector<std::size_t> DatasetHandle::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

namespace {

constexpr std::size_t kGlyphSide = 12;

std::uint64_t split_stream(const std::string& split) { return split == "test" ? 2 : 1; }

DatasetHandle two_moons(const DatasetSpec& spec) {
  const std::size_t n = spec.size ? spec.size : (spec.split == "test" ? 500 : 1000);
  const double noise = spec.noise >= 0 ? spec.noise : 0.1;
  Rng rng(mix_seed(spec.seed, 100 + split_stream(spec.split)));
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 1.0);
  DatasetHandle h{"two_moons_id", spec.split, 2, Tensor({n, 2, 1, 1}), Labels(n), false};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double t = angle(rng);
    double px = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double py = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
    px += noise * jitter(rng);
    py += noise * jitter(rng);
    h.samples[2 * i] = px;
    h.samples[2 * i + 1] = py;
    h.labels[i] = y;
  }
  return h;
}

// Annulus centred on the moons, radii [2, 3]; the moons lie within radius ~1.8.
DatasetHandle ring(const DatasetSpec& spec) {
  const std::size_t n = spec.size ? spec.size : 1000;
  Rng rng(mix_seed(spec.seed, 200 + split_stream(spec.split)));
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> r2(4.0, 9.0);  // uniform over the annulus area
  DatasetHandle h{"ring_ood", spec.split, 0, Tensor({n, 2, 1, 1}), {}, false};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = angle(rng), r = std::sqrt(r2(rng));
    h.samples[2 * i] = 0.5 + r * std::cos(t);
    h.samples[2 * i + 1] = 0.25 + r * std::sin(t);
  }
  return h;
}

void render_glyph(std::string_view glyph, Rng& rng, std::span<double> out) {
  std::uniform_int_distribution<int> ox(2, 5), oy(1, 4);
  std::uniform_real_distribution<double> ink(0.75, 1.0), u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.04);
  const int x0 = ox(rng), y0 = oy(rng);
  const double level = ink(rng);
  const bool thick = u01(rng) < 0.3;
  std::fill(out.begin(), out.end(), 0.0);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 5; ++c) {
      if (glyph[static_cast<std::size_t>(r * 5 + c)] != '#') continue;
      const auto idx = static_cast<std::size_t>(y0 + r) * kGlyphSide + static_cast<std::size_t>(x0 + c);
      out[idx] = std::max(out[idx], level);
      if (thick && x0 + c + 1 < static_cast<int>(kGlyphSide)) out[idx + 1] = std::max(out[idx + 1], 0.6 * level);
    }
  for (double& v : out) v = std::clamp(v + noise(rng), 0.0, 1.0);
}

template <std::size_t N>
DatasetHandle glyph_set(const DatasetSpec& spec, const std::array<std::string_view, N>& table, bool labelled,
                        std::uint64_t stream, std::size_t default_size) {
  const std::size_t n = spec.size ? spec.size : default_size;
  Rng rng(mix_seed(spec.seed, stream + split_stream(spec.split)));
  DatasetHandle h{spec.name, spec.split, labelled ? N : 0, Tensor({n, 1, kGlyphSide, kGlyphSide}), {}, true};
  if (labelled) h.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = i % N;
    render_glyph(table[g], rng, h.samples.sample(i));
    if (labelled) h.labels[i] = static_cast<int>(g);
  }
  return h;
}

// Netpbm reader for P2/P3 (ASCII) and P5/P6 (binary) images.
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> pixels;  // [C, H, W], normalized by maxval
};

Image read_netpbm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    if (t.empty()) throw DomainError("truncated image header in " + path.string());
    return t;
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    throw DomainError("unsupported image format in " + path.string());
  }
  Image img;
  img.channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
  } catch (const std::logic_error&) {
    throw DomainError("corrupt image header in " + path.string());
  }
  const double maxval = std::stod(token());
  if (!(maxval > 0 && maxval < 65536) || img.width == 0 || img.height == 0) {
    throw DomainError("corrupt image header in " + path.string());
  }
  const std::size_t count = img.channels * img.width * img.height;
  std::vector<double> interleaved(count);
  if (magic == "P2" || magic == "P3") {
    for (auto& v : interleaved) {
      std::string t;
      try {
        t = token();
        v = std::stod(t);
      } catch (const std::exception&) {
        throw DomainError("corrupt pixel data in " + path.string());
      }
    }
  } else {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw DomainError("truncated pixel data in " + path.string());
    }
    for (std::size_t i = 0; i < count; ++i) {
      interleaved[i] = bytes == 1 ? raw[i] : static_cast<double>(raw[2 * i] << 8 | raw[2 * i + 1]);
    }
  }
  img.pixels.resize(count);
  const std::size_t hw = img.width * img.height;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < img.channels; ++c)
      img.pixels[c * hw + p] = std::clamp(interleaved[p * img.channels + c] / maxval, 0.0, 1.0);
  return img;
}

DatasetHandle image_folder(const DatasetSpec& spec, const std::string& root) {
  if (!fs::is_directory(root)) throw DomainError("image folder '" + root + "' does not exist");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DomainError("corrupt folder '" + root + "': no class directories");

  std::vector<Image> images;
  Labels labels;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[k])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      images.push_back(read_netpbm(f));
      labels.push_back(static_cast<int>(k));
    }
  }
  if (images.empty()) throw DomainError("corrupt folder '" + root + "': no images");
  const Image& first = images.front();
  for (const auto& img : images) {
    if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
      throw DomainError("corrupt folder '" + root + "': images differ in shape");
    }
  }
  // Deterministic shuffle per seed so that take(n) gives a mixed subset.
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(spec.seed, 300));
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n = spec.size ? std::min(spec.size, images.size()) : images.size();

  DatasetHandle h{spec.name, spec.split, class_dirs.size() >= 2 ? class_dirs.size() : 0,
                  Tensor({n, first.channels, first.height, first.width}), {}, true};
  if (h.num_classes) h.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& img = images[order[i]];
    std::copy(img.pixels.begin(), img.pixels.end(), h.samples.sample(i).begin());
    if (h.num_classes) h.labels[i] = labels[order[i]];
  }
  return h;
}

}  // namespace

DatasetHandle load_dataset(const DatasetSpec& spec) {
  if (spec.split != "train" && spec.split != "test") throw DomainError("unknown split '" + spec.split + "'");
  if (spec.name == "two_moons_id") return two_moons(spec);
  if (spec.name == "ring_ood") return ring(spec);
  if (spec.name == "small_digits_id") return glyph_set(spec, glyphs::kDigits, true, 400, spec.split == "test" ? 500 : 2000);
  if (spec.name == "small_letters_ood") return glyph_set(spec, glyphs::kLetters, false, 500, 2000);
  if (spec.name.rfind("folder:", 0) == 0) return image_folder(spec, spec.name.substr(7));
  throw DomainError("unknown dataset '" + spec.name + "'");
}

DatasetHandle take(const DatasetHandle& data, std::size_t n) {
  DatasetHandle out = data;
  n = std::min(n, data.size());
  out.samples = data.samples.slice(0, n);
  if (!data.labels.empty()) out.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_(batch_size), rng_(seed) {
  if (n_ == 0) throw DomainError("cannot iterate an empty dataset");
  if (batch_ == 0) throw DomainError("batch size must be positive");
  reshuffle();
}

void BatchIterator::reshuffle() {
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::size_t> BatchIterator::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  while (out.size() < batch_) {
    if (pos_ == n_) {
      reshuffle();
      ++epoch_;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

nlohmann::json BatchIterator::state() const {
  return {{"n", n_}, {"batch", batch_}, {"pos", pos_}, {"epoch", epoch_}, {"order", order_}, {"rng", rng_state(rng_)}};
}

void BatchIterator::restore(const nlohmann::json& j) {
  n_ = j.at("n");
  batch_ = j.at("batch");
  pos_ = j.at("pos");
  epoch_ = j.at("epoch");
  order_ = j.at("order").get<std::vector<std::size_t>>();
  set_rng_state(rng_, j.at("rng").get<std::string>());
}

AugmentationPolicy AugmentationPolicy::parse(const std::string& text) {
  AugmentationPolicy p;
  p.name = text.empty() ? "none" : text;
  if (text.empty() || text == "none") return p;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '+')) {
    Transform t;
    const auto open = item.find('(');
    if (open == std::string::npos) {
      t.kind = item;
    } else {
      if (item.back() != ')') throw DomainError("malformed transform '" + item + "'");
      t.kind = item.substr(0, open);
      try {
        t.arg = std::stod(item.substr(open + 1, item.size() - open - 2));
      } catch (const std::exception&) {
        throw DomainError("malformed transform argument in '" + item + "'");
      }
    }
    static const char* known[] = {"none",   "horizontal_flip",  "random_crop_pad", "center_crop",
                                  "resize", "cutout",           "autoaugment_like", "gaussian_jitter"};
    if (std::find(std::begin(known), std::end(known), t.kind) == std::end(known)) {
      throw DomainError("unknown transform '" + t.kind + "'");
    }
    if (t.kind == "horizontal_flip" && open == std::string::npos) t.arg = 0.5;
    if (t.kind != "none") p.transforms.push_back(t);
  }
  return p;
}

std::string AugmentationPolicy::to_string() const { return name; }

namespace {

using Image3 = std::span<double>;  // one sample [C, H, W]

double bilinear(std::span<const double> plane, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1]) +
         fy * ((1 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
}

// Resamples the window [top, top+wh) x [left, left+ww) of each channel back to h x w.
void resample_window(Image3 img, std::size_t c, std::size_t h, std::size_t w, double top, double left, double wh,
                     double ww) {
  std::vector<double> src(img.begin(), img.end());
  for (std::size_t k = 0; k < c; ++k) {
    std::span<const double> plane(src.data() + k * h * w, h * w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double sy = top + (static_cast<double>(i) + 0.5) * wh / static_cast<double>(h) - 0.5;
        const double sx = left + (static_cast<double>(j) + 0.5) * ww / static_cast<double>(w) - 0.5;
        img[k * h * w + i * w + j] = bilinear(plane, h, w, sy, sx);
      }
  }
}

void apply_transform(const Transform& t, Image3 img, const Shape& s, Rng& rng) {
  const std::size_t c = s[0], h = s[1], w = s[2];
  const bool spatial = h > 1 || w > 1;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (t.kind == "gaussian_jitter") {
    std::normal_distribution<double> n(0.0, t.arg);
    for (double& v : img) v += n(rng);
    return;
  }
  if (t.kind == "horizontal_flip") {
    if (u01(rng) >= t.arg || !spatial) return;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h; ++i) std::reverse(img.begin() + static_cast<std::ptrdiff_t>((k * h + i) * w),
                                                       img.begin() + static_cast<std::ptrdiff_t>((k * h + i + 1) * w));
    return;
  }
  if (t.kind == "random_crop_pad") {
    if (!spatial) return;
    const auto pad = static_cast<long>(t.arg);
    std::uniform_int_distribution<long> off(-pad, pad);
    const long dy = off(rng), dx = off(rng);
    std::vector<double> src(img.begin(), img.end());
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const long sy = static_cast<long>(i) + dy, sx = static_cast<long>(j) + dx;
          const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
          img[(k * h + i) * w + j] = inside ? src[(k * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] : 0.0;
        }
    return;
  }
  if (t.kind == "center_crop") {
    if (!spatial) return;
    const double border = std::clamp(t.arg, 0.0, static_cast<double>(std::min(h, w)) / 2.0 - 1.0);
    resample_window(img, c, h, w, border, border, static_cast<double>(h) - 2 * border,
                    static_cast<double>(w) - 2 * border);
    return;
  }
  if (t.kind == "resize") {
    // Down-sample to arg x arg and back up; output keeps the input shape.
    if (!spatial || t.arg < 1) return;
    const auto side = static_cast<std::size_t>(t.arg);
    std::vector<double> small(c * side * side);
    for (std::size_t k = 0; k < c; ++k) {
      std::span<const double> plane(img.data() + k * h * w, h * w);
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
          small[(k * side + i) * side + j] =
              bilinear(plane, h, w, (static_cast<double>(i) + 0.5) * static_cast<double>(h) / static_cast<double>(side) - 0.5,
                       (static_cast<double>(j) + 0.5) * static_cast<double>(w) / static_cast<double>(side) - 0.5);
    }
    for (std::size_t k = 0; k < c; ++k) {
      std::span<const double> plane(small.data() + k * side * side, side * side);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          img[(k * h + i) * w + j] =
              bilinear(plane, side, side, (static_cast<double>(i) + 0.5) * static_cast<double>(side) / static_cast<double>(h) - 0.5,
                       (static_cast<double>(j) + 0.5) * static_cast<double>(side) / static_cast<double>(w) - 0.5);
    }
    return;
  }
  if (t.kind == "cutout") {
    if (!spatial) return;
    const auto size = static_cast<long>(t.arg);
    std::uniform_int_distribution<long> cy(0, static_cast<long>(h) - 1), cx(0, static_cast<long>(w) - 1);
    const long y = cy(rng), x = cx(rng);
    for (std::size_t k = 0; k < c; ++k)
      for (long i = y - size / 2; i < y - size / 2 + size; ++i)
        for (long j = x - size / 2; j < x - size / 2 + size; ++j)
          if (i >= 0 && j >= 0 && i < static_cast<long>(h) && j < static_cast<long>(w))
            img[(k * h + static_cast<std::size_t>(i)) * w + static_cast<std::size_t>(j)] = 0.0;
    return;
  }
  if (t.kind == "autoaugment_like") {
    std::uniform_real_distribution<double> contrast(0.7, 1.3), bright(-0.15, 0.15), shear(-0.2, 0.2);
    if (!spatial) {
      // point data: small random rescaling about the origin plus jitter
      std::uniform_real_distribution<double> scale(0.9, 1.1);
      std::normal_distribution<double> n(0.0, 0.05);
      const double a = scale(rng);
      for (double& v : img) v = a * v + n(rng);
      return;
    }
    const double ct = contrast(rng), br = bright(rng), sh = shear(rng);
    double mean = 0.0;
    for (double v : img) mean += v;
    mean /= static_cast<double>(img.size());
    for (double& v : img) v = (v - mean) * ct + mean + br;
    std::vector<double> src(img.begin(), img.end());
    for (std::size_t k = 0; k < c; ++k) {
      std::span<const double> plane(src.data() + k * h * w, h * w);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double sx = static_cast<double>(j) + sh * (static_cast<double>(i) - static_cast<double>(h) / 2.0);
          img[(k * h + i) * w + j] = bilinear(plane, h, w, static_cast<double>(i), sx);
        }
    }
    return;
  }
}

}  // namespace

Tensor apply_policy(const AugmentationPolicy& policy, const Tensor& batch, std::uint64_t seed, bool clamp01) {
  if (batch.rank() != 4) throw DomainError("augmentation expects a [B, C, H, W] batch, got " + shape_string(batch.shape()));
  Tensor out = batch;
  Rng rng(seed);
  const Shape s = batch.sample_shape();
  const bool spatial = s[1] > 1 || s[2] > 1;
  const double side = static_cast<double>(std::min(s[1], s[2]));
  for (const auto& t : policy.transforms) {
    const bool image_only = t.kind != "gaussian_jitter" && t.kind != "autoaugment_like";
    if (image_only && !spatial) {
      throw DomainError("transform '" + t.kind + "' needs image samples, got " + shape_string(s));
    }
    const bool too_large = (t.kind == "random_crop_pad" && t.arg >= side) ||
                           (t.kind == "center_crop" && 2 * t.arg >= side) ||
                           (t.kind == "cutout" && t.arg > static_cast<double>(std::max(s[1], s[2])));
    if (too_large) throw DomainError("transform '" + t.kind + "' argument too large for shape " + shape_string(s));
  }
  for (std::size_t i = 0; i < out.batch(); ++i) {
    auto img = out.sample(i);
    for (const auto& t : policy.transforms) apply_transform(t, img, s, rng);
    if (clamp01)
      for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

DualStream::DualStream(const DatasetHandle& data, const DatasetHandle& ood, AugmentationPolicy strong,
                       AugmentationPolicy mild, StreamSizes sizes, std::uint64_t seed)
    : data_(data),
      ood_(ood),
      strong_(std::move(strong)),
      mild_(std::move(mild)),
      cls_(data.size(), sizes.classification, mix_seed(seed, 1)),
      gen_(data.size(), sizes.data, mix_seed(seed, 2)),
      ood_it_(ood.size(), sizes.ood, mix_seed(seed, 3)),
      strong_rng_(mix_seed(seed, 4)),
      mild_data_rng_(mix_seed(seed, 5)),
      mild_ood_rng_(mix_seed(seed, 6)) {
  if (data.labels.empty()) throw DomainError("in-distribution data must be labelled");
  if (data.sample_shape() != ood.sample_shape()) {
    throw DomainError("OOD samples " + shape_string(ood.sample_shape()) + " do not match data samples " +
                      shape_string(data.sample_shape()));
  }
}

StreamBatch DualStream::next_classification() {
  StreamBatch b;
  const auto rows = cls_.next();
  b.x_strong = apply_policy(strong_, data_.batch(rows), strong_rng_(), data_.unit_range);
  b.labels = data_.batch_labels(rows);
  return b;
}

StreamBatch DualStream::next() {
  StreamBatch b = next_classification();
  const auto rows = gen_.next();
  b.x_mild = apply_policy(mild_, data_.batch(rows), mild_data_rng_(), data_.unit_range);
  const auto ood_rows = ood_it_.next();
  b.x0_mild = apply_policy(mild_, ood_.batch(ood_rows), mild_ood_rng_(), ood_.unit_range);
  return b;
}

nlohmann::json DualStream::state() const {
  return {{"cls", cls_.state()},
          {"gen", gen_.state()},
          {"ood", ood_it_.state()},
          {"strong_rng", rng_state(strong_rng_)},
          {"mild_data_rng", rng_state(mild_data_rng_)},
          {"mild_ood_rng", rng_state(mild_ood_rng_)}};
}

void DualStream::restore(const nlohmann::json& j) {
  cls_.restore(j.at("cls"));
  gen_.restore(j.at("gen"));
  ood_it_.restore(j.at("ood"));
  set_rng_state(strong_rng_, j.at("strong_rng"));
  set_rng_state(mild_data_rng_, j.at("mild_data_rng"));
  set_rng_state(mild_ood_rng_, j.at("mild_ood_rng"));
}

LabelSampler::LabelSampler(const Labels& labels, std::uint64_t seed) : labels_(&labels), rng_(seed) {
  if (labels.empty()) throw DomainError("label sampler needs labels");
}

Labels LabelSampler::sample(std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, labels_->size() - 1);
  Labels out(n);
  for (auto& y : out) y = (*labels_)[pick(rng_)];
  return out;
}

Labels balanced_labels(std::size_t n, std::size_t num_classes) {
  Labels out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % num_classes);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dat
