#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfas/label.hpp"
#include "specfas/tensor.hpp"

namespace specfas {

inline constexpr std::size_t kRgbChannels = 3;
inline constexpr std::size_t kSpectralChannels = 30;
inline constexpr std::size_t kInputChannels = kRgbChannels + kSpectralChannels;

enum class Split { Train, Val, Test };
std::string to_string(Split split);

// ---------------------------------------------------------------------------
// Container: "SPFS", u16 version, u32 h, u32 w, u32 c, then h*w*c row-major
// little-endian floats. Version 1 stores float32, version 2 float64.

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ContainerFormatError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class ContainerTruncatedError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class ContainerShapeError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

enum class ContainerPrecision : std::uint16_t { Float32 = 1, Float64 = 2 };

struct ContainerRecord {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t c = 0;
  std::vector<double> values;
};

void write_container(std::ostream& out, const ContainerRecord& record,
                     ContainerPrecision precision = ContainerPrecision::Float32);
ContainerRecord read_container(std::istream& in);

// ---------------------------------------------------------------------------

struct SpectralSample {
  std::string id;
  Tensor rgb;       // [h, w, 3], values in [0, 1]
  Tensor spectral;  // [h, w, 30], values in [0, 1]
  Label label = Label::Fake;
  std::string identity_tag;

  std::size_t height() const { return rgb.size(0); }
  std::size_t width() const { return rgb.size(1); }
  // RGB followed by the spectral cube along the channel axis: [h, w, 33].
  Tensor stacked() const;
};

// Splits a [h, w, 33] tensor back into a sample (metadata left empty).
SpectralSample sample_from_stacked(const Tensor& stacked);

void write_sample(const std::filesystem::path& path, const SpectralSample& sample);
// Pixel data only; id is the file stem.
SpectralSample load_sample(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  Label label = Label::Fake;
  std::string identity_tag;
};

struct ClassCounts {
  std::size_t real = 0;
  std::size_t fake = 0;
  std::size_t total() const { return real + fake; }
};

struct DatasetManifest {
  Split split = Split::Train;
  std::filesystem::path root;  // directory that entry paths are relative to
  std::vector<ManifestEntry> entries;

  ClassCounts counts() const;
  std::filesystem::path resolve(const ManifestEntry& entry) const { return root / entry.path; }
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `id<TAB>relative_path<TAB>label<TAB>identity_tag`, one entry per line.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path, Split split = Split::Train);

SpectralSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry);

// ---------------------------------------------------------------------------

struct SyntheticOptions {
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t identities = 20;
};

struct SyntheticDataset {
  DatasetManifest train;
  DatasetManifest val;
};

// Per-split class totals at full scale.
inline constexpr ClassCounts kTrainCounts{520, 3380};
inline constexpr ClassCounts kValCounts{208, 728};

ClassCounts scaled_counts(ClassCounts full, double scale);

/// Writes `<out>/train.tsv`, `<out>/val.tsv` and one container per sample
/// under `<out>/train/` and `<out>/val/`. Deterministic in `options.seed`.
SyntheticDataset generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out);

// Zero-mean band weights along which Real and Fake mean spectra separate:
// Real samples project above zero, Fake samples below.
std::vector<double> separating_direction();

/// Duplicates minority-class entries until both classes have equal counts:
/// whole cycles over the minority first, then a seeded draw without
/// replacement for the remainder. Original entries keep their order and come
/// first.
DatasetManifest oversample_balance(const DatasetManifest& manifest, std::uint64_t seed);

}  // namespace specfas
