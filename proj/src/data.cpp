#include "sim2xray/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "sim2xray/errors.hpp"

namespace sim2xray {

std::uint8_t denormalize_u8(float v) {
  const float scaled = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

Image from_raw(const RawImage& raw) {
  Image out(raw.height, raw.width, raw.channels);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) out.data[i] = normalize_u8(raw.pixels[i]);
  return out;
}

RawImage to_raw(const Image& image) {
  RawImage raw{image.height, image.width, image.channels, std::vector<std::uint8_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) raw.pixels[i] = denormalize_u8(image.data[i]);
  return raw;
}

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw ShapeError("resize target must be positive");
  if (image.height == out_height && image.width == out_width) return image;

  struct Tap {
    int lo, hi;
    float w;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, in - 1);
      t[i] = {lo, hi, static_cast<float>(src - lo)};
    }
    return t;
  };
  const auto ty = taps(image.height, out_height);
  const auto tx = taps(image.width, out_width);

  Image out(out_height, out_width, image.channels);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const float top = image.at(ty[y].lo, tx[x].lo, c) * (1 - tx[x].w) + image.at(ty[y].lo, tx[x].hi, c) * tx[x].w;
        const float bot = image.at(ty[y].hi, tx[x].lo, c) * (1 - tx[x].w) + image.at(ty[y].hi, tx[x].hi, c) * tx[x].w;
        out.at(y, x, c) = top * (1 - ty[y].w) + bot * ty[y].w;
      }
    }
  }
  return out;
}

Image convert_channels(const Image& image, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("data.channels", "must be 1 or 3");
  if (image.channels == channels) return image;
  Image out(image.height, image.width, channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (channels == 3) {
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x, 0);
      } else {
        out.at(y, x, 0) =
            0.299f * image.at(y, x, 0) + 0.587f * image.at(y, x, 1) + 0.114f * image.at(y, x, 2);
      }
    }
  }
  return out;
}

Image preprocess(std::span<const std::uint8_t> png_bytes, int image_size, int channels) {
  const RawImage raw = decode_png(png_bytes);
  Image img(raw.height, raw.width, raw.channels);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) img.data[i] = static_cast<float>(raw.pixels[i]);
  img = convert_channels(resize_bilinear(img, image_size, image_size), channels);
  for (float& v : img.data) v = std::clamp(v / 127.5f - 1.0f, -1.0f, 1.0f);
  return img;
}

ImageFolder load_folder(const std::filesystem::path& dir, int image_size, int channels,
                        std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG images in " + dir.string());

  ImageFolder folder;
  for (const auto& f : files) {
    try {
      const auto bytes = read_file_bytes(f);
      folder.images.push_back(preprocess(bytes, image_size, channels));
      folder.names.push_back(f.filename().string());
    } catch (const IoError& e) {
      if (warnings) warnings->push_back("skipping " + f.string() + ": " + e.what());
    }
  }
  if (folder.images.empty()) throw IoError("no decodable images in " + dir.string());
  return folder;
}

UnpairedDataset load_unpaired(const std::filesystem::path& dir_x, const std::filesystem::path& dir_y,
                              int image_size, int channels, std::vector<std::string>* warnings) {
  return {load_folder(dir_x, image_size, channels, warnings), load_folder(dir_y, image_size, channels, warnings)};
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 image_rng(std::uint64_t seed, int domain, int index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(domain) << 32) ^
                                    static_cast<std::uint64_t>(index)));
}

struct Point {
  double x, y;
};

// Cubic Bezier entering at one border and leaving near another, sampled densely.
std::vector<Point> random_curve(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = size;
  auto border_point = [&](int side) -> Point {
    const double t = 0.1 + 0.8 * u(rng);
    switch (side) {
      case 0: return {t * s, 0.0};
      case 1: return {s - 1.0, t * s};
      case 2: return {t * s, s - 1.0};
      default: return {0.0, t * s};
    }
  };
  const int side_a = static_cast<int>(u(rng) * 4) % 4;
  const int side_b = (side_a + 1 + static_cast<int>(u(rng) * 3) % 3) % 4;
  const std::array<Point, 4> p = {border_point(side_a),
                                  Point{(0.15 + 0.7 * u(rng)) * s, (0.15 + 0.7 * u(rng)) * s},
                                  Point{(0.15 + 0.7 * u(rng)) * s, (0.15 + 0.7 * u(rng)) * s},
                                  border_point(side_b)};
  const int samples = 4 * size;
  std::vector<Point> pts(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const double a = (1 - t) * (1 - t) * (1 - t), b = 3 * (1 - t) * (1 - t) * t, c = 3 * (1 - t) * t * t,
                 d = t * t * t;
    pts[i] = {a * p[0].x + b * p[1].x + c * p[2].x + d * p[3].x, a * p[0].y + b * p[1].y + c * p[2].y + d * p[3].y};
  }
  return pts;
}

// Distance from every pixel centre to the polyline.
std::vector<double> distance_field(const std::vector<Point>& pts, int size) {
  std::vector<double> dist(static_cast<std::size_t>(size) * size, 1e9);
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const Point a = pts[k], b = pts[k + 1];
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = std::max(vx * vx + vy * vy, 1e-12);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - 12);
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.x, b.x))) + 12);
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - 12);
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.y, b.y))) + 12);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double t = std::clamp(((x - a.x) * vx + (y - a.y) * vy) / len2, 0.0, 1.0);
        const double dx = x - (a.x + t * vx), dy = y - (a.y + t * vy);
        double& d = dist[static_cast<std::size_t>(y) * size + x];
        d = std::min(d, std::sqrt(dx * dx + dy * dy));
      }
    }
  }
  return dist;
}

// Anti-aliased thin stroke coverage in [0, 1].
double stroke(double dist, double radius) { return std::clamp(radius + 0.5 - dist, 0.0, 1.0); }

std::vector<double> gaussian_blur(const std::vector<double>& img, int size, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  auto pass = [&](const std::vector<double>& in, bool horizontal) {
    std::vector<double> out(in.size());
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int xx = horizontal ? std::clamp(x + i, 0, size - 1) : x;
          const int yy = horizontal ? y : std::clamp(y + i, 0, size - 1);
          acc += k[i + r] * in[static_cast<std::size_t>(yy) * size + xx];
        }
        out[static_cast<std::size_t>(y) * size + x] = acc;
      }
    return out;
  };
  return pass(pass(img, true), false);
}

RawImage quantize(const std::vector<double>& img, int size) {
  RawImage raw{size, size, 1, std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    raw.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(img[i]), 0.0, 255.0));
  }
  return raw;
}

}  // namespace

RawImage synth_x_image(std::uint64_t seed, int index, int image_size) {
  auto rng = image_rng(seed, 0, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> img(static_cast<std::size_t>(image_size) * image_size, 10.0);
  const int curves = 1 + static_cast<int>(u(rng) * 2);
  for (int c = 0; c < curves; ++c) {
    const double peak = 235.0 + 20.0 * u(rng);
    const double radius = 0.5 + 0.5 * u(rng);
    const auto dist = distance_field(random_curve(rng, image_size), image_size);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::max(img[i], 10.0 + (peak - 10.0) * stroke(dist[i], radius));
  }
  return quantize(img, image_size);
}

RawImage synth_y_image(std::uint64_t seed, int index, int image_size) {
  auto rng = image_rng(seed, 1, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 6.0);
  const double s = image_size;

  // Soft-tissue background: base level plus broad blobs.
  std::vector<double> img(static_cast<std::size_t>(image_size) * image_size, 80.0 + 30.0 * u(rng));
  for (int b = 0; b < 3; ++b) {
    const double cx = u(rng) * s, cy = u(rng) * s, rad = (0.2 + 0.3 * u(rng)) * s, amp = -25.0 + 50.0 * u(rng);
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img[static_cast<std::size_t>(y) * image_size + x] += amp * std::exp(-0.5 * d2 / (rad * rad));
      }
  }
  // Vessel-like ridges.
  const int vessels = 2 + static_cast<int>(u(rng) * 2);
  for (int v = 0; v < vessels; ++v) {
    const double width = (0.03 + 0.03 * u(rng)) * s;
    const double amp = 30.0 + 20.0 * u(rng);
    const auto dist = distance_field(random_curve(rng, image_size), image_size);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += amp * std::exp(-0.5 * dist[i] * dist[i] / (width * width));
  }
  // Catheter-like curves.
  const int curves = 1 + static_cast<int>(u(rng) * 2);
  for (int c = 0; c < curves; ++c) {
    const double peak = 215.0 + 30.0 * u(rng);
    const double radius = 0.5 + 0.5 * u(rng);
    const auto dist = distance_field(random_curve(rng, image_size), image_size);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double a = stroke(dist[i], radius);
      img[i] = img[i] * (1 - a) + peak * a;
    }
  }
  img = gaussian_blur(img, image_size, 0.8);
  for (double& v : img) v += grain(rng);
  return quantize(img, image_size);
}

SynthResult synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (options.n_x < 1) throw ConfigError("nx", "must be >= 1");
  if (options.n_y < 1) throw ConfigError("ny", "must be >= 1");
  if (options.image_size < 8) throw ConfigError("size", "must be >= 8");

  std::error_code ec;
  fs::create_directories(out_dir / "x", ec);
  if (!ec) fs::create_directories(out_dir / "y", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto name = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, i);
    return std::string(buf);
  };
  SynthResult result;
  for (int i = 0; i < options.n_x; ++i) {
    result.files_x.push_back(out_dir / "x" / name("sim", i));
    write_png(result.files_x.back(), synth_x_image(options.seed, i, options.image_size));
  }
  for (int i = 0; i < options.n_y; ++i) {
    result.files_y.push_back(out_dir / "y" / name("xray", i));
    write_png(result.files_y.back(), synth_y_image(options.seed, i, options.image_size));
  }
  nlohmann::ordered_json manifest = {{"seed", options.seed},
                                     {"counts", {{"x", options.n_x}, {"y", options.n_y}}},
                                     {"size", options.image_size}};
  result.manifest = out_dir / "manifest.json";
  std::ofstream out(result.manifest);
  if (!out) throw IoError("cannot write " + result.manifest.string());
  out << manifest.dump(2) << "\n";
  return result;
}

}  // namespace sim2xray
