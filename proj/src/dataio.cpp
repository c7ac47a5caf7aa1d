#include "specfas/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "specfas/ops.hpp"
#include "specfas/rng.hpp"

namespace specfas {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Container

namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'F', 'S'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 3 * 4;

template <class T>
void put_le(std::string& buf, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

}  // namespace

void write_container(std::ostream& out, const ContainerRecord& record, ContainerPrecision precision) {
  const std::size_t n = static_cast<std::size_t>(record.h) * record.w * record.c;
  if (n != record.values.size()) {
    throw ContainerShapeError(fmt::format("record header {}x{}x{} does not match {} values", record.h, record.w,
                                          record.c, record.values.size()));
  }
  std::string buf;
  buf.reserve(kHeaderBytes + n * 8);
  buf.append(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(precision));
  put_le<std::uint32_t>(buf, record.h);
  put_le<std::uint32_t>(buf, record.w);
  put_le<std::uint32_t>(buf, record.c);
  for (double v : record.values) {
    if (precision == ContainerPrecision::Float32) {
      put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ContainerError("container write failed");
}

ContainerRecord read_container(std::istream& in) {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got >= 4 && std::memcmp(header.data(), kMagic.data(), 4) != 0) {
    throw ContainerFormatError("bad magic (expected SPFS)");
  }
  if (got < header.size()) throw ContainerTruncatedError(fmt::format("header truncated at {} bytes", got));
  const auto version = get_le<std::uint16_t>(header.data() + 4);
  if (version != 1 && version != 2) throw ContainerFormatError(fmt::format("unsupported version {}", version));
  ContainerRecord record;
  record.h = get_le<std::uint32_t>(header.data() + 6);
  record.w = get_le<std::uint32_t>(header.data() + 10);
  record.c = get_le<std::uint32_t>(header.data() + 14);
  if (record.h == 0 || record.w == 0 || record.c == 0) {
    throw ContainerShapeError(fmt::format("degenerate header {}x{}x{}", record.h, record.w, record.c));
  }
  const std::uint64_t n = static_cast<std::uint64_t>(record.h) * record.w * record.c;
  const std::size_t width = version == 1 ? 4 : 8;
  if (n > (std::uint64_t{1} << 34) / width) {
    throw ContainerShapeError(fmt::format("header {}x{}x{} is implausibly large", record.h, record.w, record.c));
  }
  std::vector<unsigned char> payload(static_cast<std::size_t>(n) * width);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
    throw ContainerTruncatedError(
        fmt::format("payload truncated: expected {} bytes, got {}", payload.size(), in.gcount()));
  }
  record.values.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < record.values.size(); ++i) {
    if (width == 4) {
      record.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload.data() + 4 * i));
    } else {
      record.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload.data() + 8 * i));
    }
  }
  return record;
}

// ---------------------------------------------------------------------------
// Samples

Tensor SpectralSample::stacked() const {
  if (rgb.dim() != 3 || spectral.dim() != 3 || rgb.size(0) != spectral.size(0) || rgb.size(1) != spectral.size(1)) {
    throw ShapeError(fmt::format("rgb {} and spectral {} planes disagree", shape_str(rgb.shape()),
                                 shape_str(spectral.shape())));
  }
  return ops::concat({rgb, spectral}, 2);
}

SpectralSample sample_from_stacked(const Tensor& stacked) {
  if (stacked.dim() != 3 || stacked.size(2) != kInputChannels) {
    throw ShapeError(fmt::format("expected [h, w, {}], got {}", kInputChannels, shape_str(stacked.shape())));
  }
  SpectralSample s;
  s.rgb = ops::slice(stacked, 2, 0, kRgbChannels).detach();
  s.spectral = ops::slice(stacked, 2, kRgbChannels, kInputChannels).detach();
  return s;
}

void write_sample(const std::filesystem::path& path, const SpectralSample& sample) {
  const Tensor x = sample.stacked();
  ContainerRecord record;
  record.h = static_cast<std::uint32_t>(x.size(0));
  record.w = static_cast<std::uint32_t>(x.size(1));
  record.c = static_cast<std::uint32_t>(x.size(2));
  record.values.assign(x.data().begin(), x.data().end());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError(fmt::format("cannot open {} for writing", path.string()));
  write_container(out, record);
}

SpectralSample load_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(fmt::format("cannot open {}", path.string()));
  ContainerRecord record = read_container(in);
  if (record.c != kInputChannels) {
    throw ContainerShapeError(
        fmt::format("{}: sample has {} channels, expected {}", path.string(), record.c, kInputChannels));
  }
  SpectralSample s = sample_from_stacked(Tensor::from({record.h, record.w, record.c}, std::move(record.values)));
  s.id = path.stem().string();
  return s;
}

SpectralSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry) {
  SpectralSample s = load_sample(manifest.resolve(entry));
  s.id = entry.id;
  s.label = entry.label;
  s.identity_tag = entry.identity_tag;
  return s;
}

// ---------------------------------------------------------------------------
// Manifest

ClassCounts DatasetManifest::counts() const {
  ClassCounts c;
  for (const auto& e : entries) (e.label == Label::Real ? c.real : c.fake)++;
  return c;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError(fmt::format("cannot open {} for writing", path.string()));
  for (const auto& e : manifest.entries) {
    out << e.id << '\t' << e.path << '\t' << to_string(e.label) << '\t' << e.identity_tag << '\n';
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw ManifestError(fmt::format("cannot open manifest {}", path.string()));
  DatasetManifest m;
  m.split = split;
  m.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw ManifestError(fmt::format("{}:{}: expected 4 tab-separated fields, got {}", path.string(), lineno,
                                      fields.size()));
    }
    try {
      m.entries.push_back({fields[0], fields[1], parse_label(fields[2]), fields[3]});
    } catch (const std::invalid_argument& e) {
      throw ManifestError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

double bump(double t, double centre, double width) {
  const double z = (t - centre) / width;
  return std::exp(-0.5 * z * z);
}

double band_position(std::size_t band) { return static_cast<double>(band) / (kSpectralChannels - 1); }

// Two reflectance curves per class family. Real skin carries absorption dips
// in the middle bands; print and silicone attacks do not.
double family_curve(Label label, int variant, double t) {
  if (label == Label::Real) {
    if (variant == 0) return 0.30 + 0.35 * t - 0.12 * bump(t, 0.35, 0.05) - 0.10 * bump(t, 0.52, 0.05);
    return 0.38 + 0.25 * t - 0.10 * bump(t, 0.36, 0.06) - 0.12 * bump(t, 0.50, 0.05);
  }
  if (variant == 0) return 0.42 + 0.12 * t + 0.03 * std::sin(2.0 * std::numbers::pi * t) + 0.04 * bump(t, 0.43, 0.10);
  return 0.30 + 0.30 * t + 0.08 * bump(t, 0.43, 0.08);
}

struct Identity {
  double brightness;
  std::array<double, 3> tint;
  double eye_dx;
  double eye_dy;
  double face_rx;
  double face_ry;
};

Identity make_identity(Rng& rng) {
  Identity id{};
  id.brightness = rng.uniform(0.8, 1.0);
  for (auto& t : id.tint) t = rng.uniform(0.85, 1.1);
  id.eye_dx = rng.uniform(0.25, 0.35);
  id.eye_dy = rng.uniform(-0.3, -0.15);
  id.face_rx = rng.uniform(0.6, 0.75);
  id.face_ry = rng.uniform(0.78, 0.9);
  return id;
}

constexpr double kBackground = 0.1;

SpectralSample render_sample(const Identity& ident, Label label, std::size_t h, std::size_t w, Rng& rng) {
  const double mix = rng.uniform();
  const double light = rng.uniform(-0.15, 0.15);
  const double noise = 0.03;
  std::array<double, kSpectralChannels> curve{};
  for (std::size_t b = 0; b < kSpectralChannels; ++b) {
    const double t = band_position(b);
    curve[b] = mix * family_curve(label, 0, t) + (1.0 - mix) * family_curve(label, 1, t);
  }
  // Broad RGB responses centred on the red, green and blue ends of the range.
  const std::array<double, 3> centres{0.8, 0.5, 0.2};
  std::array<double, 3> rgb_base{};
  for (std::size_t c = 0; c < 3; ++c) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t b = 0; b < kSpectralChannels; ++b) {
      const double weight = bump(band_position(b), centres[c], 0.15);
      num += weight * curve[b];
      den += weight;
    }
    rgb_base[c] = num / den;
  }

  std::vector<double> rgb(h * w * kRgbChannels);
  std::vector<double> spec(h * w * kSpectralChannels);
  for (std::size_t y = 0; y < h; ++y) {
    const double v = 2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(h) - 1.0;
    for (std::size_t x = 0; x < w; ++x) {
      const double u = 2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 1.0;
      const double fu = u / ident.face_rx;
      const double fv = v / ident.face_ry;
      const bool face = fu * fu + fv * fv <= 1.0;
      double shade = 1.0;
      if (face) {
        shade = ident.brightness * (1.0 + light * u) * (1.0 - 0.2 * (fu * fu + fv * fv));
        for (double side : {-1.0, 1.0}) {
          const double du = (u - side * ident.eye_dx) / 0.12;
          const double dv = (v - ident.eye_dy) / 0.07;
          if (du * du + dv * dv <= 1.0) shade *= 0.6;
        }
        const double mu = u / 0.25;
        const double mv = (v - 0.45) / 0.06;
        if (mu * mu + mv * mv <= 1.0) shade *= 0.75;
      }
      const std::size_t px = y * w + x;
      for (std::size_t b = 0; b < kSpectralChannels; ++b) {
        const double base = face ? shade * curve[b] : kBackground;
        spec[px * kSpectralChannels + b] =
            static_cast<float>(std::clamp(base + rng.uniform(-noise, noise), 0.0, 1.0));
      }
      for (std::size_t c = 0; c < kRgbChannels; ++c) {
        const double base = face ? shade * ident.tint[c] * rgb_base[c] : kBackground;
        rgb[px * kRgbChannels + c] = static_cast<float>(std::clamp(base + rng.uniform(-noise, noise), 0.0, 1.0));
      }
    }
  }
  SpectralSample s;
  s.rgb = Tensor::from({h, w, kRgbChannels}, std::move(rgb));
  s.spectral = Tensor::from({h, w, kSpectralChannels}, std::move(spec));
  s.label = label;
  return s;
}

std::size_t scaled(std::size_t full, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(full) * scale)));
}

}  // namespace

ClassCounts scaled_counts(ClassCounts full, double scale) {
  return {scaled(full.real, scale), scaled(full.fake, scale)};
}

std::vector<double> separating_direction() {
  std::vector<double> d(kSpectralChannels);
  double mean = 0.0;
  for (std::size_t b = 0; b < kSpectralChannels; ++b) {
    const double t = band_position(b);
    d[b] = -bump(t, 0.35, 0.05) - bump(t, 0.51, 0.05);
    mean += d[b];
  }
  mean /= static_cast<double>(kSpectralChannels);
  for (double& v : d) v -= mean;
  return d;
}

SyntheticDataset generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out) {
  if (!(options.scale > 0.0 && options.scale <= 1.0)) {
    throw std::invalid_argument(fmt::format("scale must lie in (0, 1], got {}", options.scale));
  }
  if (options.height < 16 || options.width < 16) {
    throw std::invalid_argument(fmt::format("height and width must be >= 16, got {}x{}", options.height, options.width));
  }
  if (options.identities == 0) throw std::invalid_argument("at least one identity is required");

  Rng id_rng = Rng::derive(options.seed, {0});
  std::vector<Identity> identities;
  for (std::size_t i = 0; i < options.identities; ++i) identities.push_back(make_identity(id_rng));

  SyntheticDataset result;
  std::uint64_t split_no = 0;
  for (auto [split, full, manifest] : {std::tuple{Split::Train, kTrainCounts, &result.train},
                                       std::tuple{Split::Val, kValCounts, &result.val}}) {
    ++split_no;
    const std::string name = to_string(split);
    std::filesystem::create_directories(out / name);
    manifest->split = split;
    manifest->root = out;
    const ClassCounts counts = scaled_counts(full, options.scale);
    Rng rng = Rng::derive(options.seed, {split_no});
    for (Label label : {Label::Fake, Label::Real}) {
      const std::size_t n = label == Label::Real ? counts.real : counts.fake;
      // Identities cycle through both classes so every subject has real and
      // fake captures once a class has at least `identities` samples.
      const std::size_t offset = rng.index(options.identities);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t ident = (k + offset) % options.identities;
        SpectralSample s = render_sample(identities[ident], label, options.height, options.width, rng);
        s.id = fmt::format("{}_{}_{:05d}", name, to_string(label), k);
        s.identity_tag = fmt::format("id{:02d}", ident);
        const std::string rel = fmt::format("{}/{}.spfs", name, s.id);
        write_sample(out / rel, s);
        manifest->entries.push_back({s.id, rel, label, s.identity_tag});
      }
    }
    write_manifest(out / (name + ".tsv"), *manifest);
  }
  return result;
}

// ---------------------------------------------------------------------------

DatasetManifest oversample_balance(const DatasetManifest& manifest, std::uint64_t seed) {
  const ClassCounts counts = manifest.counts();
  if (counts.real == 0 || counts.fake == 0) {
    throw std::invalid_argument(
        fmt::format("oversampling needs both classes, got {} real / {} fake", counts.real, counts.fake));
  }
  DatasetManifest balanced = manifest;
  if (counts.real == counts.fake) return balanced;

  const Label minority = counts.real < counts.fake ? Label::Real : Label::Fake;
  const std::size_t target = std::max(counts.real, counts.fake);
  std::vector<const ManifestEntry*> pool;
  for (const auto& e : manifest.entries) {
    if (e.label == minority) pool.push_back(&e);
  }
  const std::size_t cycles = target / pool.size();
  const std::size_t remainder = target % pool.size();
  for (std::size_t c = 1; c < cycles; ++c) {
    for (const auto* e : pool) balanced.entries.push_back(*e);
  }
  Rng rng(seed);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(remainder));
  std::sort(picked.begin(), picked.end());
  for (std::size_t i : picked) balanced.entries.push_back(*pool[i]);
  return balanced;
}

}  // namespace specfas
