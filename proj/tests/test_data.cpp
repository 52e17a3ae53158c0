#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cflow/data/images.hpp"
#include "cflow/data/vectors.hpp"

using namespace cflow;

namespace {

std::vector<std::uint8_t> two_image_file() {
  return {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4, 250, 251, 252, 255};
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cflow_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("hand-built IDX file with two 2x2 images parses exactly") {
  auto ds = parse_idx_images(two_image_file());
  CHECK(ds.size() == 2);
  CHECK(ds.shape == ImageShape{1, 2, 2});
  CHECK(ds.pixels == std::vector<std::uint8_t>{1, 2, 3, 4, 250, 251, 252, 255});
  Tensor b = ds.all();
  CHECK(b.shape() == Shape{2, 4});
  CHECK(b.at(1, 3) == 255.0);
}

TEST_CASE("IDX magic 0x00000802 is an unsupported-type error") {
  auto bytes = two_image_file();
  bytes[3] = 2;
  try {
    parse_idx_images(bytes);
    FAIL("expected IdxParseError");
  } catch (const IdxParseError& e) {
    CHECK(e.kind() == IdxParseError::Kind::kUnsupportedType);
    CHECK(e.offset() == 0);
  }
  bytes[0] = 1;
  try {
    parse_idx_images(bytes);
    FAIL("expected IdxParseError");
  } catch (const IdxParseError& e) {
    CHECK(e.kind() == IdxParseError::Kind::kBadMagic);
  }
}

TEST_CASE("IDX payload one byte short reports truncation at the end offset") {
  auto bytes = two_image_file();
  bytes.pop_back();
  try {
    parse_idx_images(bytes);
    FAIL("expected IdxParseError");
  } catch (const IdxParseError& e) {
    CHECK(e.kind() == IdxParseError::Kind::kTruncated);
    CHECK(e.offset() == 23);
    CHECK(std::string(e.what()).find("23") != std::string::npos);
  }
  std::vector<std::uint8_t> header_only{0, 0, 8, 3, 0, 0};
  CHECK_THROWS_AS(parse_idx_images(header_only), IdxParseError);
}

TEST_CASE("IDX trailing bytes are rejected with their offset") {
  auto bytes = two_image_file();
  bytes.push_back(7);
  try {
    parse_idx_images(bytes);
    FAIL("expected IdxParseError");
  } catch (const IdxParseError& e) {
    CHECK(e.kind() == IdxParseError::Kind::kTrailingBytes);
    CHECK(e.offset() == 24);
  }
}

TEST_CASE("IDX labels parse and reject the image magic") {
  std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9};
  CHECK(parse_idx_labels(labels) == std::vector<std::uint8_t>{7, 0, 9});
  CHECK(encode_idx_labels(parse_idx_labels(labels)) == labels);
  CHECK_THROWS_AS(parse_idx_labels(two_image_file()), IdxParseError);
}

TEST_CASE("IDX write after load is byte-identical on disk") {
  const auto src = temp_path("src.idx");
  const auto dst = temp_path("dst.idx");
  auto ds = gen_synthetic(SyntheticFamily::kBlobs, 13, 8, 4);
  write_idx(src, ds);
  auto loaded = load_idx(src);
  write_idx(dst, loaded);
  CHECK(read_file_bytes(src) == read_file_bytes(dst));
  CHECK(loaded.pixels == ds.pixels);

  const auto lbl = temp_path("labels.idx");
  std::vector<std::uint8_t> labels(13, 1);
  write_idx_labels(lbl, labels);
  CHECK(load_idx(src, lbl).labels == labels);
  write_idx_labels(lbl, std::vector<std::uint8_t>(12, 1));
  CHECK_THROWS_AS(load_idx(src, lbl), InputError);
  CHECK_THROWS_AS(load_idx(temp_path("missing.idx")), IoError);
}

TEST_CASE("synthetic generators are deterministic pure functions of their arguments") {
  for (auto f : {SyntheticFamily::kBlobs, SyntheticFamily::kStripes, SyntheticFamily::kPatches}) {
    auto a = gen_synthetic(f, 20, 16, 9);
    CHECK(a.pixels == gen_synthetic(f, 20, 16, 9).pixels);
    CHECK(a.pixels != gen_synthetic(f, 20, 16, 10).pixels);
    CHECK(a.size() == 20);
    CHECK(a.shape == ImageShape{1, 16, 16});
  }
  CHECK_THROWS_AS(gen_synthetic(SyntheticFamily::kBlobs, 5, 15, 0), ConfigError);
  CHECK(parse_synthetic_family("patches") == SyntheticFamily::kPatches);
  CHECK_THROWS_AS(parse_synthetic_family("noise"), ConfigError);
}

TEST_CASE("synthetic complexity ordering: patches < blobs < stripes") {
  // Frozen regression values (n = 500, 16 x 16, seed 1).
  const double patches = mean_horizontal_difference(gen_synthetic(SyntheticFamily::kPatches, 500, 16, 1));
  const double blobs = mean_horizontal_difference(gen_synthetic(SyntheticFamily::kBlobs, 500, 16, 1));
  const double stripes = mean_horizontal_difference(gen_synthetic(SyntheticFamily::kStripes, 500, 16, 1));
  CHECK(patches < blobs);
  CHECK(blobs < stripes);
  CHECK(patches == doctest::Approx(1.4120916666666667).epsilon(1e-12));
  CHECK(blobs == doctest::Approx(16.758708333333335).epsilon(1e-12));
  CHECK(stripes == doctest::Approx(37.519591666666663).epsilon(1e-12));
}

TEST_CASE("random split is a deterministic partition with the requested test size") {
  auto s = random_split(100, 0.1, 3);
  CHECK(s.test.size() == 10);
  CHECK(s.train.size() == 90);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < 100; ++k) CHECK(all[k] == k);
  CHECK(random_split(100, 0.1, 3).test == s.test);
  CHECK(random_split(100, 0.1, 4).test != s.test);
}

TEST_CASE("vector CSV parses labels and features") {
  auto ds = parse_vectors_csv("a,label,b\n1.5,0,2\n-3,1,4e-1\n");
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.labels == std::vector<int>{0, 1});
  CHECK(ds.vectors.at(1, 1) == 0.4);
  CHECK(ds.rows_with_label(1) == std::vector<std::size_t>{1});
}

TEST_CASE("vector CSV errors name row and column") {
  try {
    parse_vectors_csv("a,b\n1,2\n3,x\n");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  try {
    parse_vectors_csv("a,b\n1,2\n3\n");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("vector CSV write then load round-trips exactly") {
  auto ds = gen_gaussian_mixture_2class(20, 3, 5);
  const auto path = temp_path("vectors.csv");
  write_vectors_csv(path, ds);
  auto back = load_vectors_csv(path);
  CHECK(back.vectors == ds.vectors);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("a constant feature is dropped at any threshold below one") {
  auto ds = parse_vectors_csv("a,b,c\n1,5,0\n2,5,0\n3,5,1\n4,5,2\n");
  for (double threshold : {0.1, 0.5, 0.99}) {
    auto rec = fit_tabular(ds, threshold);
    CHECK(std::find(rec.kept.begin(), rec.kept.end(), 1) == rec.kept.end());
  }
  // Column c repeats 0 in half of the rows.
  CHECK(fit_tabular(ds, 0.4).kept == std::vector<std::size_t>{0});
  CHECK(fit_tabular(ds, 0.5).kept == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(fit_tabular(ds, 0.0), ConfigError);
}

TEST_CASE("standardized training features have zero mean and unit deviation") {
  auto ds = gen_gaussian_mixture_2class(200, 6, 2);
  auto out = preprocess_tabular(ds, 0.1);
  REQUIRE(out.dims() == 6);
  for (std::size_t c = 0; c < out.dims(); ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < out.size(); ++r) m += out.vectors.at(r, c);
    m /= static_cast<double>(out.size());
    for (std::size_t r = 0; r < out.size(); ++r) v += (out.vectors.at(r, c) - m) * (out.vectors.at(r, c) - m);
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::sqrt(v / static_cast<double>(out.size())) == doctest::Approx(1.0).epsilon(1e-10));
  }
  // Applying the record to another split is a pure function of the record.
  auto other = gen_gaussian_mixture_2class(10, 6, 3);
  CHECK(apply_standardization(other, out.standardization).vectors ==
        apply_standardization(other, out.standardization).vectors);
}

TEST_CASE("class split holds out 10 percent of the in-class rows") {
  auto ds = gen_gaussian_mixture_2class(100, 4, 1);
  auto split = split_by_class(ds, 1, 7);
  CHECK(split.train.size() == 90);
  CHECK(split.test.size() == 10);
  CHECK(split.ood.size() == 100);
  for (int l : split.train.labels) CHECK(l == 1);
  for (int l : split.ood.labels) CHECK(l == 0);
  CHECK_THROWS_AS(split_by_class(ds, 5, 7), InputError);
}

TEST_CASE("two moons is deterministic and bounded") {
  Tensor a = gen_two_moons(300, 0.05, 1);
  CHECK(a == gen_two_moons(300, 0.05, 1));
  for (double v : a.data()) CHECK(std::abs(v) < 3.0);
}
