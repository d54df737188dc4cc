#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "sdd/checkpoint.hpp"

namespace sdd {
namespace {

ModelSpec spec_a() {
    ModelSpec s;
    s.input_dim = 5;
    s.hidden_dims = {7, 6};
    s.head_dims = {4, 3};
    s.dropout_position = 1;
    return s;
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const CheckpointError& e) {
        return e.what();
    }
    return "";
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const Parameters p = init_model(spec_a(), 3);
    const auto dir = testing::scratch_dir("ckpt_roundtrip");
    save_checkpoint(p, dir / "m.ckpt");
    const Parameters q = load_checkpoint(dir / "m.ckpt");
    EXPECT_TRUE(p.identical(q));
    EXPECT_EQ(q.spec(), spec_a());
    EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
}

TEST(Checkpoint, EncodingIsDeterministic) {
    EXPECT_EQ(encode_checkpoint(init_model(spec_a(), 3)), encode_checkpoint(init_model(spec_a(), 3)));
}

TEST(Checkpoint, TruncatedPayloadReportsLengths) {
    std::string bytes = encode_checkpoint(init_model(spec_a(), 3));
    bytes.resize(bytes.size() - 8);
    const auto msg = message_of([&] { decode_checkpoint(bytes); });
    EXPECT_NE(msg.find("payload length"), std::string::npos) << msg;
}

TEST(Checkpoint, SpecMismatchPrintsBothSpecs) {
    const std::string bytes = encode_checkpoint(init_model(spec_a(), 3));
    ModelSpec other = spec_a();
    other.hidden_dims = {7, 8};
    const auto msg = message_of([&] { decode_checkpoint(bytes, other); });
    EXPECT_NE(msg.find(spec_a().describe()), std::string::npos) << msg;
    EXPECT_NE(msg.find(other.describe()), std::string::npos) << msg;
}

TEST(Checkpoint, VersionMismatchRejected) {
    std::string bytes = encode_checkpoint(init_model(spec_a(), 3));
    const auto pos = bytes.find("\"format_version\": 1");
    ASSERT_NE(pos, std::string::npos);
    bytes.replace(pos, 19, "\"format_version\": 9");
    EXPECT_NE(message_of([&] { decode_checkpoint(bytes); }).find("version 9"), std::string::npos);
}

TEST(Checkpoint, GarbageRejected) {
    EXPECT_FALSE(message_of([] { decode_checkpoint("hello\nworld"); }).empty());
    EXPECT_FALSE(message_of([] { decode_checkpoint("SDDCKPT\nmanifest_bytes=999\n{}"); }).empty());
}

TEST(Checkpoint, InconsistentTensorShapeRejected) {
    std::string bytes = encode_checkpoint(init_model(spec_a(), 3));
    // Claim a different input width in the manifest only.
    const auto pos = bytes.find("\"input_dim\": 5");
    ASSERT_NE(pos, std::string::npos);
    bytes.replace(pos, 14, "\"input_dim\": 4");
    EXPECT_FALSE(message_of([&] { decode_checkpoint(bytes); }).empty());
}

TEST(AtomicWrite, ReplacesExistingFile) {
    const auto dir = testing::scratch_dir("atomic");
    write_file_atomic(dir / "sub" / "f.txt", "first");
    write_file_atomic(dir / "sub" / "f.txt", "second");
    EXPECT_EQ(read_file(dir / "sub" / "f.txt"), "second");
}

}  // namespace
}  // namespace sdd
