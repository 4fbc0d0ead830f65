#include <gtest/gtest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "svdq/io.hpp"
#include "svdq/pipeline.hpp"

using svdq::CompressedKeyCache;
using svdq::Index;
using svdq::Matrix;

namespace {

std::string temp_path(const std::string & name) {
    const std::filesystem::path dir =
        std::filesystem::path(::testing::TempDir()) / "svdq_io_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

CompressedKeyCache small_cache() {
    const Matrix keys = testutil::gaussian(32, 8, 51);
    return svdq::compress(keys, svdq::make_schedule({8, 4, 2, 0}, 8));
}

void patch_f32(std::vector<std::uint8_t> & bytes, std::size_t offset, float v) {
    std::uint32_t raw;
    std::memcpy(&raw, &v, sizeof raw);
    bytes[offset] = static_cast<std::uint8_t>(raw & 0xFF);
    bytes[offset + 1] = static_cast<std::uint8_t>((raw >> 8) & 0xFF);
    bytes[offset + 2] = static_cast<std::uint8_t>((raw >> 16) & 0xFF);
    bytes[offset + 3] = static_cast<std::uint8_t>((raw >> 24) & 0xFF);
}

} // namespace

TEST(Kmat, ExactRoundTrip) {
    const Matrix m = testutil::gaussian_f32(8, 5, 50);
    const Matrix back = svdq::decode_kmat(svdq::encode_kmat(m));
    EXPECT_EQ(back, m);
}

TEST(Kmat, EncodeDecodeEncodeIsStable) {
    const std::vector<std::uint8_t> bytes = svdq::encode_kmat(testutil::gaussian(6, 4, 52));
    const std::vector<std::uint8_t> again = svdq::encode_kmat(svdq::decode_kmat(bytes));
    EXPECT_EQ(again, bytes);
}

TEST(Kmat, FileRoundTrip) {
    const std::string path = temp_path("roundtrip.kmat");
    const Matrix m = testutil::gaussian_f32(7, 3, 53);
    svdq::write_kmat(path, m);
    EXPECT_EQ(svdq::read_kmat(path), m);
    EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST(Kmat, EveryTruncationRejected) {
    const std::vector<std::uint8_t> bytes = svdq::encode_kmat(testutil::gaussian(2, 2, 54));
    ASSERT_EQ(bytes.size(), 41u);
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        EXPECT_THROW(svdq::decode_kmat(bytes.data(), len), svdq::DataError) << "prefix " << len;
    }
}

TEST(Kmat, HeaderCorruptionsRejected) {
    const std::vector<std::uint8_t> good = svdq::encode_kmat(testutil::gaussian(2, 2, 55));

    std::vector<std::uint8_t> bad = good;
    bad[0] = 'X';
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    bad[4] = 2;  // version
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    bad[24] = 1;  // dtype
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    for (std::size_t i = 8; i < 16; ++i) {
        bad[i] = 0;  // rows = 0
    }
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    bad[11] = 2;  // rows = 2 + 2^24: over the cap, and the length check would fail anyhow
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    bad.push_back(0);
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);

    bad = good;
    patch_f32(bad, 25, std::numeric_limits<float>::infinity());
    EXPECT_THROW(svdq::decode_kmat(bad), svdq::DataError);
}

TEST(Svdq, EncodeDecodeEncodeIsStable) {
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(small_cache());
    const std::vector<std::uint8_t> again = svdq::encode_svdq(svdq::decode_svdq(bytes));
    EXPECT_EQ(again, bytes);
}

TEST(Svdq, DecodedCacheReconstructsTheSameKeys) {
    const Matrix keys = testutil::gaussian(32, 8, 56);
    const CompressedKeyCache cache = svdq::compress(keys, svdq::make_schedule({8, 4, 2, 0}, 8));
    const CompressedKeyCache decoded = svdq::decode_svdq(svdq::encode_svdq(cache));
    // side data passes through f32, so the two reconstructions agree closely
    // but not bitwise
    const Matrix a = svdq::decompress(cache);
    const Matrix b = svdq::decompress(decoded);
    EXPECT_LT((a - b).norm(), 1e-5 * a.norm());
    EXPECT_EQ(decoded.rows, cache.rows);
    EXPECT_EQ(decoded.dim, cache.dim);
    EXPECT_EQ(decoded.q.payload, cache.q.payload);
    EXPECT_EQ(decoded.q.schedule.group_bits, cache.q.schedule.group_bits);
}

TEST(Svdq, FileRoundTrip) {
    const std::string path = temp_path("roundtrip.svdq");
    const CompressedKeyCache cache = small_cache();
    svdq::write_svdq(path, cache);
    const CompressedKeyCache back = svdq::read_svdq(path);
    EXPECT_EQ(svdq::encode_svdq(back), svdq::encode_svdq(cache));
    EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST(Svdq, EveryTruncationRejected) {
    const Matrix keys = testutil::gaussian(4, 2, 57);
    const CompressedKeyCache cache = svdq::compress(keys, svdq::make_schedule({2, 1}, 2));
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(cache);
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        EXPECT_THROW(svdq::decode_svdq(bytes.data(), len), svdq::DataError) << "prefix " << len;
    }
    EXPECT_NO_THROW(svdq::decode_svdq(bytes));
}

TEST(Svdq, StructuralCorruptionsRejected) {
    const std::vector<std::uint8_t> good = svdq::encode_svdq(small_cache());

    std::vector<std::uint8_t> bad = good;
    bad[2] = 'x';
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad[4] = 9;  // version
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad[24] = 0;  // group count 0
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad[24] = 3;  // 8 channels cannot split into 3 groups
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad[28] = 5;  // no 5-bit storage
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad[28] = 2;  // widths (2, 4, ...) increase
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);

    bad = good;
    bad.push_back(0);
    EXPECT_THROW(svdq::decode_svdq(bad), svdq::DataError);
}

TEST(Svdq, InvertedRangeRejected) {
    CompressedKeyCache cache = small_cache();
    ASSERT_GT(cache.q.ch_max(0), cache.q.ch_min(0));
    std::swap(cache.q.ch_min(0), cache.q.ch_max(0));
    // the encoder does not police ranges, the decoder must
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(cache);
    EXPECT_THROW(svdq::decode_svdq(bytes), svdq::DataError);
}

TEST(Svdq, NonzeroPaddingRejected) {
    // 10 rows at 3 bits leaves 2 dead bits in the last byte of the channel
    const Matrix keys = testutil::gaussian(10, 4, 58);
    const CompressedKeyCache cache = svdq::compress(keys, svdq::make_schedule({3, 1}, 4));
    std::vector<std::uint8_t> bytes = svdq::encode_svdq(cache);
    EXPECT_NO_THROW(svdq::decode_svdq(bytes));
    const std::size_t payload_start = bytes.size() - cache.q.payload.size();
    const std::size_t tail = payload_start + svdq::packed_bytes(10, 3) - 1;
    bytes[tail] |= 0x80;
    EXPECT_THROW(svdq::decode_svdq(bytes), svdq::DataError);
}

TEST(Svdq, PayloadBitFlipsNeverCrash) {
    const CompressedKeyCache cache = small_cache();
    const std::vector<std::uint8_t> good = svdq::encode_svdq(cache);
    const std::size_t payload_start = good.size() - cache.q.payload.size();
    for (std::size_t at = payload_start; at < good.size(); ++at) {
        std::vector<std::uint8_t> bytes = good;
        bytes[at] ^= 0x55;
        try {
            const CompressedKeyCache decoded = svdq::decode_svdq(bytes);
            const Matrix keys = svdq::decompress(decoded);
            EXPECT_TRUE(keys.allFinite());
        } catch (const svdq::DataError &) {
            // rejecting the flip is equally acceptable
        }
    }
}

TEST(Svdq, ConstantRowsArchiveIsAFixedPoint) {
    const Matrix keys = testutil::constant_rows(12, 3);
    const CompressedKeyCache cache = svdq::compress(keys, svdq::make_schedule({8, 4, 2}, 3));
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(cache);
    const Matrix restored = svdq::decompress(svdq::decode_svdq(bytes));
    EXPECT_EQ(restored, keys);
    const std::vector<std::uint8_t> again =
        svdq::encode_svdq(svdq::compress(restored, svdq::make_schedule({8, 4, 2}, 3)));
    EXPECT_EQ(again, bytes);
}

TEST(Svdq, TwoValuedColumnArchiveIsAFixedPoint) {
    const Matrix keys = testutil::lossless_column();
    const svdq::BitSchedule schedule = svdq::make_schedule({8}, 1);
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(svdq::compress(keys, schedule));
    const Matrix restored = svdq::decompress(svdq::decode_svdq(bytes));
    EXPECT_EQ(restored, keys);
    const std::vector<std::uint8_t> again =
        svdq::encode_svdq(svdq::compress(restored, schedule));
    EXPECT_EQ(again, bytes);
}

TEST(Files, MissingAndUnwritablePaths) {
    EXPECT_THROW(svdq::read_file(temp_path("no-such-file.bin")), svdq::DataError);
    const std::string bad = "/nonexistent-svdq-dir/out.kmat";
    EXPECT_THROW(svdq::write_kmat(bad, testutil::gaussian(2, 2, 59)), svdq::DataError);
    EXPECT_FALSE(std::filesystem::exists(bad));
}

TEST(Files, EncoderRejectsBadInput) {
    EXPECT_THROW(svdq::encode_kmat(Matrix(0, 0)), svdq::DataError);
    Matrix huge(1, 1);
    huge(0, 0) = 1e60;  // overflows f32
    EXPECT_THROW(svdq::encode_kmat(huge), svdq::DataError);
}
