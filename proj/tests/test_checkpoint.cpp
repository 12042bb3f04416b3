#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "test_support.hpp"
#include "vacl/checkpoint.hpp"
#include "vacl/errors.hpp"

namespace vacl {
namespace {

namespace fs = std::filesystem;

ParamMap sample_tensors() {
    std::mt19937_64 rng(5);
    ParamMap p;
    p["w"] = testing::random_tensor({3, 4}, rng);
    p["b"] = Tensor::vector({-0.0, std::numeric_limits<double>::denorm_min(), 1e308});
    p["scalar"] = Tensor::scalar(2.5);
    p["empty"] = Tensor({0, 7});
    p[""] = Tensor::vector({1.0});
    return p;
}

class CheckpointFiles : public ::testing::Test {
protected:
    fs::path dir = fs::temp_directory_path() /
                   ("vacl_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    void SetUp() override {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
};

TEST(Checkpoint, RoundTripIsExact) {
    const ParamMap p = sample_tensors();
    const ParamMap q = parse_checkpoint(serialize_checkpoint(p));
    EXPECT_EQ(p, q);
    EXPECT_TRUE(std::signbit(q.at("b")[0]));
    EXPECT_EQ(q.at("scalar").shape(), Shape{});
    EXPECT_EQ(q.at("empty").shape(), (Shape{0, 7}));
}

TEST(Checkpoint, TrailingZeroExtentRoundTrips) {
    const ParamMap p = {{"a", Tensor::vector({1.0})}, {"z", Tensor({5, 5, 0})}};
    EXPECT_EQ(parse_checkpoint(serialize_checkpoint(p)), p);
}

TEST(Checkpoint, LargeTensorRoundTrips) {
    std::mt19937_64 rng(1);
    ParamMap p;
    p["big"] = testing::random_tensor({1024, 1000}, rng);
    EXPECT_EQ(parse_checkpoint(serialize_checkpoint(p)), p);
}

TEST(Checkpoint, HeaderLayout) {
    const std::string bytes = serialize_checkpoint({{"a", Tensor::vector({1.0})}});
    ASSERT_GE(bytes.size(), 12u);
    EXPECT_EQ(bytes.substr(0, 4), "VACL");
    EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
    EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
    // header 12 + name 4+1 + dims 4+8 + payload 8 + crc 4
    EXPECT_EQ(bytes.size(), 41u);
    EXPECT_EQ(serialize_checkpoint({{"a", Tensor::vector({1.0})}}), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
    const std::string good = serialize_checkpoint(sample_tensors());
    for (std::size_t i = 0; i < good.size(); i += 7) {
        std::string bad = good;
        bad[i] = static_cast<char>(bad[i] ^ 0x10);
        EXPECT_THROW(parse_checkpoint(bad), IoError) << "flipped byte " << i;
    }
}

TEST(Checkpoint, RejectsTruncationAndTrailingBytes) {
    const std::string good = serialize_checkpoint(sample_tensors());
    for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{11}, good.size() / 2, good.size() - 1})
        EXPECT_THROW(parse_checkpoint(good.substr(0, n)), IoError) << n;
    EXPECT_THROW(parse_checkpoint(good + '\0'), IoError);
}

TEST(Checkpoint, RejectsWrongMagicAndVersion) {
    std::string bytes = serialize_checkpoint({});
    bytes[0] = 'X';
    EXPECT_THROW(parse_checkpoint(bytes), IoError);
    bytes = serialize_checkpoint({});
    bytes[4] = 2;
    EXPECT_THROW(parse_checkpoint(bytes), IoError);
}

TEST_F(CheckpointFiles, SaveLoad) {
    const ParamMap p = sample_tensors();
    save_checkpoint(dir / "m.ckpt", p);
    EXPECT_EQ(load_checkpoint(dir / "m.ckpt"), p);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_F(CheckpointFiles, AtomicWriteReplacesAndLeavesNoTemporaries) {
    write_file_atomic(dir / "f.txt", "first");
    write_file_atomic(dir / "f.txt", "second");
    EXPECT_EQ(read_file(dir / "f.txt"), "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
    EXPECT_EQ(entries, 1u);
    EXPECT_THROW(write_file_atomic(dir / "no_such_dir" / "f.txt", "x"), IoError);
    EXPECT_FALSE(fs::exists(dir / "no_such_dir"));
}

}  // namespace
}  // namespace vacl
