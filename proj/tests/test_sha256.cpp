#include <doctest.h>

#include <cstdio>
#include <string>

#include "dynlm/common.hpp"
#include "dynlm/sha256.hpp"
#include "support/temp_dir.hpp"

using namespace dynlm;

TEST_SUITE("sha256") {

TEST_CASE("standard vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  CHECK(sha256_hex(std::string("The quick brown fox jumps over the lazy dog")) ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("one million a, streamed in uneven chunks") {
  Sha256 h;
  const std::string chunk(997, 'a');
  std::size_t fed = 0;
  while (fed + chunk.size() <= 1000000) {
    h.update(chunk.data(), chunk.size());
    fed += chunk.size();
  }
  const std::string rest(1000000 - fed, 'a');
  h.update(rest.data(), rest.size());
  CHECK(h.hex_digest() ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("streaming matches one-shot on block boundaries") {
  std::string data;
  for (int i = 0; i < 300; ++i) data.push_back(static_cast<char>(i % 251));
  for (std::size_t cut : {std::size_t(1), std::size_t(63), std::size_t(64), std::size_t(65)}) {
    Sha256 h;
    std::size_t pos = 0;
    while (pos < data.size()) {
      const std::size_t len = std::min(cut, data.size() - pos);
      h.update(data.data() + pos, len);
      pos += len;
    }
    CHECK(h.hex_digest() == sha256_hex(data));
  }
}

TEST_CASE("file digest matches the in-memory digest") {
  testsupport::TempDir dir;
  const std::string path = dir.file("blob.bin");
  std::string data;
  for (int i = 0; i < 10000; ++i) data.push_back(static_cast<char>((i * 7) % 256));
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fwrite(data.data(), 1, data.size(), f);
  std::fclose(f);
  CHECK(sha256_file_hex(path) == sha256_hex(data));
}

TEST_CASE("missing file raises a data error") {
  CHECK_THROWS_AS(sha256_file_hex("/nonexistent/never/file.bin"), DataError);
}

}  // TEST_SUITE
