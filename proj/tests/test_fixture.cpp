// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0

#include "tpskit/fixture.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tpskit/config.hpp"

using namespace tps;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("tpskit_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.patch_size = 8;
    cfg.embed_dim = 8;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.num_classes = 3;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Fixture, WeightsRoundTripBitIdentical) {
    const fs::path dir = scratch_dir("roundtrip");
    const ModelConfig cfg = tiny_config();
    const ModelWeights w = fixture_weights(cfg, 2, 99);
    const std::string path = (dir / "weights.json").string();
    save_weights(path, w);
    const ModelWeights back = load_weights(path, cfg);

    EXPECT_EQ(back.patch_w.data, w.patch_w.data);
    EXPECT_EQ(back.pos_embed.data, w.pos_embed.data);
    EXPECT_EQ(back.cls_token, w.cls_token);
    ASSERT_EQ(back.blocks.size(), w.blocks.size());
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        EXPECT_EQ(back.blocks[i].w_qkv.data, w.blocks[i].w_qkv.data);
        EXPECT_EQ(back.blocks[i].b_fc1, w.blocks[i].b_fc1);
    }
    ASSERT_EQ(back.score_heads.size(), 2u);
    EXPECT_EQ(back.score_heads[1].w_fc2.data, w.score_heads[1].w_fc2.data);
    EXPECT_EQ(back.head_w.data, w.head_w.data);
}

TEST(Fixture, GeneratorIsDeterministicPerSeed) {
    const fs::path dir = scratch_dir("determinism");
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    const ModelConfig cfg = tiny_config();
    save_weights((dir / "a" / "w.json").string(), fixture_weights(cfg, 1, 7));
    save_weights((dir / "b" / "w.json").string(), fixture_weights(cfg, 1, 7));
    EXPECT_EQ(slurp(dir / "a" / "w.json"), slurp(dir / "b" / "w.json"));  // identical checksums
    EXPECT_EQ(slurp(dir / "a" / "w.bin"), slurp(dir / "b" / "w.bin"));

    save_weights((dir / "c.json").string(), fixture_weights(cfg, 1, 8));
    EXPECT_NE(slurp(dir / "a" / "w.bin"), slurp(dir / "c.bin"));
}

TEST(Fixture, TruncatedBlobCitesByteCounts) {
    const fs::path dir = scratch_dir("truncated");
    const ModelConfig cfg = tiny_config();
    save_weights((dir / "w.json").string(), fixture_weights(cfg, 0, 1));
    const std::string blob = slurp(dir / "w.bin");
    std::ofstream f(dir / "w.bin", std::ios::binary | std::ios::trunc);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
    f.close();
    try {
        load_weights((dir / "w.json").string(), cfg);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("expected " + std::to_string(blob.size())), std::string::npos) << msg;
        EXPECT_NE(msg.find("got " + std::to_string(blob.size() / 2)), std::string::npos) << msg;
    }
}

TEST(Fixture, CorruptedTensorNamesItself) {
    const fs::path dir = scratch_dir("corrupt");
    const ModelConfig cfg = tiny_config();
    save_weights((dir / "w.json").string(), fixture_weights(cfg, 0, 2));
    std::string blob = slurp(dir / "w.bin");
    blob[3] = static_cast<char>(blob[3] ^ 0x40);  // flip a bit inside the first tensor
    std::ofstream f(dir / "w.bin", std::ios::binary | std::ios::trunc);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    f.close();
    try {
        load_weights((dir / "w.json").string(), cfg);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("patch_embed.weight"), std::string::npos) << e.what();
    }
}

TEST(Fixture, BadMagicAndVersionAreNamed) {
    const fs::path dir = scratch_dir("magic");
    const ModelConfig cfg = tiny_config();
    save_weights((dir / "w.json").string(), fixture_weights(cfg, 0, 3));

    nlohmann::json manifest;
    {
        std::ifstream mf(dir / "w.json");
        mf >> manifest;
    }
    manifest["magic"] = "nope";
    {
        std::ofstream mf(dir / "w.json");
        mf << manifest.dump();
    }
    try {
        load_fixture((dir / "w.json").string());
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }

    manifest["magic"] = "tpskit.fixture";
    manifest["version"] = 2;
    {
        std::ofstream mf(dir / "w.json");
        mf << manifest.dump();
    }
    try {
        load_fixture((dir / "w.json").string());
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}

TEST(Fixture, MissingFileMentionsPath) {
    try {
        load_fixture("/nonexistent/place/w.json");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/place/w.json"), std::string::npos);
    }
}

TEST(Fixture, MissingTensorIsNamed) {
    const fs::path dir = scratch_dir("missing");
    const ModelConfig cfg = tiny_config();
    std::vector<TensorEntry> entries = weights_to_entries(fixture_weights(cfg, 0, 4));
    entries.erase(entries.begin() + 2);  // drop cls_token
    save_fixture((dir / "w.json").string(), entries, "weights");
    try {
        load_weights((dir / "w.json").string(), cfg);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("cls_token"), std::string::npos) << e.what();
    }
}

TEST(Fixture, InputRoundTripWithLabels) {
    const fs::path dir = scratch_dir("input");
    const ImageBatch img = fixture_images(3, 16, 16, 5);
    save_input((dir / "in.json").string(), img, std::vector<int>{2, 0, 1});
    const InputFixture fx = load_input((dir / "in.json").string());
    EXPECT_EQ(fx.images.data, img.data);
    EXPECT_EQ(fx.images.batch, 3);
    ASSERT_TRUE(fx.labels.has_value());
    EXPECT_EQ(*fx.labels, (std::vector<int>{2, 0, 1}));
}

TEST(Fixture, KindMismatchRejected) {
    const fs::path dir = scratch_dir("kind");
    const ImageBatch img = fixture_images(1, 16, 16, 6);
    save_input((dir / "in.json").string(), img);
    EXPECT_THROW(load_weights((dir / "in.json").string(), tiny_config()), IoError);
}

TEST(Fixture, GeometryMismatchRejected) {
    const fs::path dir = scratch_dir("geometry");
    const ModelConfig cfg = tiny_config();
    save_weights((dir / "w.json").string(), fixture_weights(cfg, 0, 7));
    ModelConfig other = cfg;
    other.embed_dim = 16;
    EXPECT_THROW(load_weights((dir / "w.json").string(), other), IoError);
}
