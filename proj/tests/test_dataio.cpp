#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "specfas/dataio.hpp"
#include "support.hpp"

using namespace specfas;
using testing::TempDir;

namespace {

SpectralSample random_sample(Rng& rng, std::size_t h, std::size_t w) {
  SpectralSample s;
  s.id = "s";
  s.rgb = testing::random_tensor(rng, {h, w, 3}, 0, 1);
  s.spectral = testing::random_tensor(rng, {h, w, 30}, 0, 1);
  // Round through float so the on-disk float32 record is lossless.
  for (Tensor* t : {&s.rgb, &s.spectral}) {
    for (double& v : t->mutable_data()) v = static_cast<float>(v);
  }
  return s;
}

std::map<std::string, std::string> directory_digest(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = testing::slurp(e.path());
  }
  return files;
}

}  // namespace

TEST_CASE("container header layout") {
  ContainerRecord rec{2, 1, 3, {1, 2, 3, 4, 5, 6}};
  std::ostringstream out;
  write_container(out, rec);
  const std::string bytes = out.str();
  REQUIRE(bytes.size() == 4 + 2 + 12 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "SPFS");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 0);
  CHECK(static_cast<unsigned char>(bytes[6]) == 2);  // h, little endian
  float first = 0;
  std::memcpy(&first, bytes.data() + 18, 4);
  CHECK(first == 1.0f);
}

TEST_CASE("container round trip is bit exact") {
  Rng rng(1);
  for (auto precision : {ContainerPrecision::Float32, ContainerPrecision::Float64}) {
    ContainerRecord rec{3, 4, 5, {}};
    for (int i = 0; i < 60; ++i) {
      const double v = rng.normal();
      rec.values.push_back(precision == ContainerPrecision::Float32 ? static_cast<float>(v) : v);
    }
    std::ostringstream out;
    write_container(out, rec, precision);
    std::istringstream in(out.str());
    const ContainerRecord back = read_container(in);
    CHECK(back.h == 3);
    CHECK(back.w == 4);
    CHECK(back.c == 5);
    CHECK(back.values == rec.values);
    std::ostringstream again;
    write_container(again, back, precision);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("container errors are distinct") {
  ContainerRecord rec{2, 2, 2, std::vector<double>(8, 0.5)};
  std::ostringstream out;
  write_container(out, rec);
  const std::string good = out.str();

  SUBCASE("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    std::istringstream in(bad);
    CHECK_THROWS_AS(read_container(in), ContainerFormatError);
  }
  SUBCASE("unknown version") {
    std::string bad = good;
    bad[4] = 9;
    std::istringstream in(bad);
    CHECK_THROWS_AS(read_container(in), ContainerFormatError);
  }
  SUBCASE("truncated payload") {
    std::istringstream in(good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(read_container(in), ContainerTruncatedError);
  }
  SUBCASE("truncated header") {
    std::istringstream in(good.substr(0, 10));
    CHECK_THROWS_AS(read_container(in), ContainerTruncatedError);
  }
  SUBCASE("value count does not match header") {
    ContainerRecord wrong{2, 2, 2, std::vector<double>(7, 0.5)};
    std::ostringstream o;
    CHECK_THROWS_AS(write_container(o, wrong), ContainerShapeError);
  }
  SUBCASE("sample file with the wrong channel count") {
    TempDir dir("dataio_shape");
    {
      std::ofstream f(dir / "x.spfs", std::ios::binary);
      write_container(f, rec);
    }
    CHECK_THROWS_AS(load_sample(dir / "x.spfs"), ContainerShapeError);
  }
}

TEST_CASE("sample write and load") {
  TempDir dir("dataio_sample");
  Rng rng(2);
  const SpectralSample s = random_sample(rng, 5, 6);
  write_sample(dir / "abc.spfs", s);
  const SpectralSample back = load_sample(dir / "abc.spfs");
  CHECK(back.id == "abc");
  CHECK(back.height() == 5);
  CHECK(back.width() == 6);
  CHECK(std::equal(back.rgb.data().begin(), back.rgb.data().end(), s.rgb.data().begin()));
  CHECK(std::equal(back.spectral.data().begin(), back.spectral.data().end(), s.spectral.data().begin()));
  write_sample(dir / "again.spfs", back);
  CHECK(testing::slurp(dir / "again.spfs") == testing::slurp(dir / "abc.spfs"));

  const Tensor stacked = s.stacked();
  CHECK(stacked.shape() == Shape{5, 6, 33});
  CHECK(stacked.at({1, 2, 0}) == s.rgb.at({1, 2, 0}));
  CHECK(stacked.at({1, 2, 3}) == s.spectral.at({1, 2, 0}));
  const SpectralSample split = sample_from_stacked(stacked);
  CHECK(std::equal(split.spectral.data().begin(), split.spectral.data().end(), s.spectral.data().begin()));
}

TEST_CASE("manifest round trip and errors") {
  TempDir dir("dataio_manifest");
  DatasetManifest m;
  m.entries = {{"a", "train/a.spfs", Label::Real, "id03"}, {"b", "train/b.spfs", Label::Fake, "id07"}};
  write_manifest(dir / "m.tsv", m);
  CHECK(testing::slurp(dir / "m.tsv") == "a\ttrain/a.spfs\treal\tid03\nb\ttrain/b.spfs\tfake\tid07\n");
  const DatasetManifest back = read_manifest(dir / "m.tsv", Split::Val);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.split == Split::Val);
  CHECK(back.entries[1].label == Label::Fake);
  CHECK(back.resolve(back.entries[0]) == dir.path() / "train/a.spfs");
  CHECK(back.counts().real == 1);

  std::ofstream(dir / "bad.tsv") << "a\tpath\tmaybe\tid\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), ManifestError);
  std::ofstream(dir / "short.tsv") << "a\tpath\n";
  CHECK_THROWS_AS(read_manifest(dir / "short.tsv"), ManifestError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.tsv"), ManifestError);
}

TEST_CASE("scaled counts follow the published ratios") {
  CHECK(kTrainCounts.fake == 3380);
  CHECK(kTrainCounts.real == 520);
  CHECK(kTrainCounts.total() == 3900);
  CHECK(kValCounts.total() == 936);
  const ClassCounts t = scaled_counts(kTrainCounts, 0.1);
  CHECK(t.fake == 338);
  CHECK(t.real == 52);
  const ClassCounts full = scaled_counts(kValCounts, 1.0);
  CHECK(full.fake == 728);
  CHECK(full.real == 208);
}

TEST_CASE("synthetic generation") {
  TempDir dir("dataio_gen");
  const SyntheticDataset a = generate_synthetic({7, 0.02, 16, 16}, dir / "a");
  const SyntheticDataset b = generate_synthetic({7, 0.02, 16, 16}, dir / "b");
  const SyntheticDataset c = generate_synthetic({8, 0.02, 16, 16}, dir / "c");

  SUBCASE("counts and files") {
    CHECK(a.train.counts().fake == scaled_counts(kTrainCounts, 0.02).fake);
    CHECK(a.train.counts().real == scaled_counts(kTrainCounts, 0.02).real);
    CHECK(a.val.counts().fake == scaled_counts(kValCounts, 0.02).fake);
    for (const auto* m : {&a.train, &a.val}) {
      for (const auto& e : m->entries) {
        const SpectralSample s = load_sample(*m, e);
        CHECK(s.height() == 16);
        for (double v : s.spectral.data()) REQUIRE((v >= 0.0 && v <= 1.0));
      }
    }
    const DatasetManifest reread = read_manifest(dir / "a" / "train.tsv");
    CHECK(reread.entries.size() == a.train.entries.size());
  }
  SUBCASE("byte identical per seed") {
    CHECK(directory_digest(dir / "a") == directory_digest(dir / "b"));
    CHECK(directory_digest(dir / "a") != directory_digest(dir / "c"));
  }
  SUBCASE("identities appear in both classes") {
    std::set<std::string> real_ids, fake_ids;
    for (const auto& e : a.train.entries) (e.label == Label::Real ? real_ids : fake_ids).insert(e.identity_tag);
    std::size_t shared = 0;
    for (const auto& id : real_ids) shared += fake_ids.count(id);
    CHECK(shared > 0);
  }
  SUBCASE("classes separate along the mean-spectrum direction") {
    const auto d = separating_direction();
    double sum = 0.0;
    for (double v : d) sum += v;
    CHECK(std::abs(sum) < 1e-12);
    for (const auto* m : {&a.train, &a.val}) {
      for (const auto& e : m->entries) {
        const SpectralSample s = load_sample(*m, e);
        std::vector<double> mean(30, 0.0);
        const auto v = s.spectral.data();
        for (std::size_t i = 0; i < v.size(); ++i) mean[i % 30] += v[i];
        double proj = 0.0;
        for (std::size_t b = 0; b < 30; ++b) proj += d[b] * mean[b] / static_cast<double>(v.size() / 30);
        CAPTURE(e.id);
        CHECK((e.label == Label::Real ? proj > 0.0 : proj < 0.0));
      }
    }
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(generate_synthetic({1, 0.0, 16, 16}, dir / "x"), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic({1, 1.5, 16, 16}, dir / "x"), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic({1, 0.1, 8, 16}, dir / "x"), std::invalid_argument);
  }
}

namespace {

DatasetManifest make_manifest(std::size_t fake, std::size_t real) {
  DatasetManifest m;
  for (std::size_t i = 0; i < fake; ++i) m.entries.push_back({"f" + std::to_string(i), "", Label::Fake, ""});
  for (std::size_t i = 0; i < real; ++i) m.entries.push_back({"r" + std::to_string(i), "", Label::Real, ""});
  return m;
}

}  // namespace

TEST_CASE("oversample_balance") {
  SUBCASE("published proportions") {
    const DatasetManifest m = make_manifest(3380, 520);
    const DatasetManifest b = oversample_balance(m, 11);
    CHECK(b.counts().fake == 3380);
    CHECK(b.counts().real == 3380);
    std::map<std::string, int> copies;
    for (const auto& e : b.entries) {
      if (e.label == Label::Real) ++copies[e.id];
    }
    CHECK(copies.size() == 520);
    std::size_t seven = 0;
    for (const auto& [id, n] : copies) {
      CHECK((n == 6 || n == 7));
      seven += n == 7;
    }
    CHECK(seven == 260);
    // Originals untouched and first.
    for (std::size_t i = 0; i < m.entries.size(); ++i) CHECK(b.entries[i].id == m.entries[i].id);
  }
  SUBCASE("exact cycles") {
    const DatasetManifest b = oversample_balance(make_manifest(10, 5), 3);
    std::map<std::string, int> copies;
    for (const auto& e : b.entries) ++copies[e.id];
    for (const auto& [id, n] : copies) CHECK(n == (id[0] == 'r' ? 2 : 1));
  }
  SUBCASE("already balanced is unchanged") {
    const DatasetManifest m = make_manifest(4, 4);
    CHECK(oversample_balance(m, 1).entries.size() == 8);
  }
  SUBCASE("minority fake class") {
    const DatasetManifest b = oversample_balance(make_manifest(3, 10), 1);
    CHECK(b.counts().fake == 10);
  }
  SUBCASE("seeded remainder") {
    const DatasetManifest m = make_manifest(25, 7);
    auto ids = [](const DatasetManifest& d) {
      std::vector<std::string> out;
      for (const auto& e : d.entries) out.push_back(e.id);
      return out;
    };
    CHECK(ids(oversample_balance(m, 5)) == ids(oversample_balance(m, 5)));
  }
  SUBCASE("random proportions") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t f = 1 + rng.index(60), r = 1 + rng.index(60);
      const DatasetManifest b = oversample_balance(make_manifest(f, r), trial);
      CHECK(b.counts().fake == b.counts().real);
      std::set<std::string> distinct;
      for (const auto& e : b.entries) distinct.insert(e.id);
      CHECK(distinct.size() == f + r);
    }
  }
  SUBCASE("single class is an error") {
    CHECK_THROWS_AS(oversample_balance(make_manifest(5, 0), 1), std::invalid_argument);
  }
}
