#include "helpers.hpp"
#include "sempsf/io.hpp"

#include <doctest.h>

#include <fstream>

using namespace sempsf;
namespace fs = std::filesystem;

TEST_CASE("8-bit PGM decoding") {
  const fs::path dir = testing::scratch_dir("io8");
  {
    std::ofstream out(dir / "a.pgm", std::ios::binary);
    out << "P5\n# comment\n2 2\n255\n";
    const unsigned char bytes[] = {0, 255, 128, 64};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  const Image2D img = load_image(dir / "a.pgm");
  REQUIRE(img.rows() == 2);
  REQUIRE(img.cols() == 2);
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 255.0);
  CHECK(img(1, 0) == 128.0);
  CHECK(img(1, 1) == 64.0);
  fs::remove_all(dir);
}

TEST_CASE("16-bit round trips in every format") {
  const fs::path dir = testing::scratch_dir("io16");
  Image2D img(3, 5);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<double>(i * 4099 % 65536);
  img(2, 4) = 65535.0;
  for (const char* name : {"a.pgm", "a.png", "a.raw"}) {
    save_image(img, dir / name, 16);
    const Image2D back = load_image(dir / name);
    CHECK((back == img).all());
    CHECK(back(2, 4) == 65535.0);
  }
  Image2D small = (img / 300.0).round();
  save_image(small, dir / "b.png", 8);
  CHECK((load_image(dir / "b.png") == small).all());
  fs::remove_all(dir);
}

TEST_CASE("saving clamps and rounds") {
  const fs::path dir = testing::scratch_dir("ioclamp");
  Image2D img(1, 4);
  img << 300.0, -5.0, 1.4, 1.6;
  save_image(img, dir / "c.pgm", 8);
  const Image2D back = load_image(dir / "c.pgm");
  CHECK(back(0, 0) == 255.0);
  CHECK(back(0, 1) == 0.0);
  CHECK(back(0, 2) == 1.0);
  CHECK(back(0, 3) == 2.0);
  fs::remove_all(dir);
}

TEST_CASE("image errors") {
  CHECK_THROWS_WITH_AS(load_image("/nonexistent/x.pgm"), doctest::Contains("file not found"), Error);
  CHECK_THROWS_AS(save_image(Image2D::Zero(2, 2), "", 8), Error);
  const fs::path dir = testing::scratch_dir("ioerr");
  {
    std::ofstream out(dir / "rgb.pgm", std::ios::binary);
    out << "P6\n1 1\n255\nabc";
  }
  CHECK_THROWS_WITH_AS(load_image(dir / "rgb.pgm"), doctest::Contains("color"), Error);
  {
    std::ofstream out(dir / "short.pgm", std::ios::binary);
    out << "P5\n4 4\n255\nab";
  }
  CHECK_THROWS_WITH_AS(load_image(dir / "short.pgm"), doctest::Contains("truncated"), Error);
  fs::remove_all(dir);
}

TEST_CASE("masks") {
  const fs::path dir = testing::scratch_dir("iomask");
  BinaryImage2D m(2, 3);
  m << true, false, true, false, false, true;
  save_mask(m, dir / "m.pgm");
  CHECK((load_mask(dir / "m.pgm") == m).all());
  fs::remove_all(dir);
}

TEST_CASE("key-value files") {
  KeyValueFile kv = KeyValueFile::parse("a = 1.5\n# note\nb = hello world  # trailing\nlist = 1, 2 3\n");
  CHECK(kv.get_double("a") == 1.5);
  CHECK(kv.get_string("b") == "hello world");
  CHECK(kv.get_doubles("list") == std::vector<double>{1, 2, 3});
  CHECK(kv.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(kv.get_double("missing"), Error);
  CHECK_THROWS_AS(kv.get_double("b"), Error);
  kv.apply_override("a=2.25");
  CHECK(kv.get_double("a") == 2.25);
  CHECK_THROWS_AS(kv.apply_override("novalue"), Error);
  const KeyValueFile again = KeyValueFile::parse(kv.to_string());
  CHECK(again.values() == kv.values());
}

TEST_CASE("tap tables round trip exactly") {
  const fs::path dir = testing::scratch_dir("iotaps");
  Rng rng(3);
  const Image2D taps = testing::random_image(3, 3, rng);
  save_tap_table(taps, dir / "t.txt");
  CHECK((load_tap_table(dir / "t.txt") == taps).all());
  const Kernel1D k = Kernel1D::Random(7);
  save_kernel1d(k, dir / "k.txt");
  CHECK((load_kernel1d(dir / "k.txt") == k).all());
  CHECK(format_double(0.1) == "0.1");
  fs::remove_all(dir);
}
