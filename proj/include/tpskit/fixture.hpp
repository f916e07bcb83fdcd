// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpskit/errors.hpp"
#include "tpskit/vit.hpp"

namespace tps {

// blobs are raw native floats; the format is pinned little-endian
static_assert(std::endian::native == std::endian::little,
              "fixture blobs assume a little-endian host");

inline std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// One named tensor inside a fixture.
struct TensorEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (int s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

// Fixture container: a JSON manifest (tensor name, shape, byte offset,
// checksum) next to one raw little-endian float32 blob. `kind` tags what
// the fixture holds ("weights" or "input").
inline void save_fixture(const std::string& manifest_path, const std::vector<TensorEntry>& tensors,
                         const std::string& kind) {
    namespace fs = std::filesystem;
    const fs::path mpath(manifest_path);
    fs::path bpath = mpath;
    bpath.replace_extension(".bin");

    std::vector<char> blob;
    nlohmann::json manifest;
    manifest["magic"] = "tpskit.fixture";
    manifest["version"] = 1;
    manifest["kind"] = kind;
    manifest["blob"] = bpath.filename().string();
    nlohmann::json tl = nlohmann::json::array();
    for (const TensorEntry& t : tensors) {
        if (t.data.size() != t.count())
            throw IoError("save_fixture: tensor '" + t.name + "' data does not match shape");
        nlohmann::json e;
        e["name"] = t.name;
        e["shape"] = t.shape;
        e["offset"] = blob.size();
        const std::size_t bytes = t.data.size() * sizeof(float);
        e["bytes"] = bytes;
        e["checksum"] = hex64(fnv1a64(t.data.data(), bytes));
        const std::size_t at = blob.size();
        blob.resize(at + bytes);
        std::memcpy(blob.data() + at, t.data.data(), bytes);
        tl.push_back(e);
    }
    manifest["tensors"] = tl;
    manifest["blob_bytes"] = blob.size();

    std::ofstream bf(bpath, std::ios::binary);
    if (!bf) throw IoError("save_fixture: cannot write blob " + bpath.string());
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    bf.close();

    std::ofstream mf(mpath);
    if (!mf) throw IoError("save_fixture: cannot write manifest " + mpath.string());
    mf << manifest.dump(2) << "\n";
}

inline std::vector<TensorEntry> load_fixture(const std::string& manifest_path,
                                             std::string* kind_out = nullptr) {
    namespace fs = std::filesystem;
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("load_fixture: cannot open manifest " + manifest_path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_fixture: manifest " + manifest_path + " is not valid JSON: " +
                      e.what());
    }
    if (!manifest.contains("magic") || manifest["magic"] != "tpskit.fixture")
        throw IoError("load_fixture: bad manifest field 'magic' in " + manifest_path);
    if (!manifest.contains("version") || manifest["version"].get<int>() != 1)
        throw IoError("load_fixture: unsupported manifest field 'version' in " + manifest_path);
    if (!manifest.contains("blob") || !manifest.contains("blob_bytes") ||
        !manifest.contains("tensors"))
        throw IoError("load_fixture: manifest missing field 'blob', 'blob_bytes' or 'tensors'");
    if (kind_out != nullptr) *kind_out = manifest.value("kind", std::string("unknown"));

    const fs::path bpath = fs::path(manifest_path).parent_path() /
                           manifest["blob"].get<std::string>();
    std::ifstream bf(bpath, std::ios::binary);
    if (!bf) throw IoError("load_fixture: cannot open blob " + bpath.string());
    std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
    const std::size_t expected = manifest["blob_bytes"].get<std::size_t>();
    if (blob.size() != expected)
        throw IoError("load_fixture: blob " + bpath.string() + " truncated or padded: expected " +
                      std::to_string(expected) + " bytes, got " + std::to_string(blob.size()));

    std::vector<TensorEntry> tensors;
    for (const nlohmann::json& e : manifest["tensors"]) {
        TensorEntry t;
        t.name = e.at("name").get<std::string>();
        t.shape = e.at("shape").get<std::vector<int>>();
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t bytes = e.at("bytes").get<std::size_t>();
        if (bytes != t.count() * sizeof(float))
            throw IoError("load_fixture: tensor '" + t.name + "' byte count disagrees with shape");
        if (offset + bytes > blob.size())
            throw IoError("load_fixture: tensor '" + t.name + "' extends past blob end: needs " +
                          std::to_string(offset + bytes) + " bytes, blob has " +
                          std::to_string(blob.size()));
        t.data.resize(t.count());
        std::memcpy(t.data.data(), blob.data() + offset, bytes);
        const std::string check = hex64(fnv1a64(t.data.data(), bytes));
        if (check != e.at("checksum").get<std::string>())
            throw IoError("load_fixture: checksum mismatch for tensor '" + t.name + "'");
        tensors.push_back(std::move(t));
    }
    return tensors;
}

namespace detail {

inline void push_matrix(std::vector<TensorEntry>& out, const std::string& name, const Matrix& m) {
    out.push_back({name, {m.rows, m.cols}, m.data});
}

inline void push_vector(std::vector<TensorEntry>& out, const std::string& name,
                        const std::vector<float>& v) {
    out.push_back({name, {static_cast<int>(v.size())}, v});
}

class EntryMap {
public:
    explicit EntryMap(std::vector<TensorEntry> entries) : entries_(std::move(entries)) {}

    const TensorEntry& get(const std::string& name) const {
        for (const TensorEntry& e : entries_)
            if (e.name == name) return e;
        throw IoError("weights: required tensor '" + name + "' missing from fixture");
    }

    Matrix matrix(const std::string& name) const {
        const TensorEntry& e = get(name);
        if (e.shape.size() != 2) throw IoError("weights: tensor '" + name + "' is not a matrix");
        Matrix m(e.shape[0], e.shape[1]);
        m.data = e.data;
        return m;
    }

    std::vector<float> vector(const std::string& name) const {
        const TensorEntry& e = get(name);
        if (e.shape.size() != 1) throw IoError("weights: tensor '" + name + "' is not a vector");
        return e.data;
    }

    bool has(const std::string& name) const {
        for (const TensorEntry& e : entries_)
            if (e.name == name) return true;
        return false;
    }

private:
    std::vector<TensorEntry> entries_;
};

}  // namespace detail

inline std::vector<TensorEntry> weights_to_entries(const ModelWeights& w) {
    std::vector<TensorEntry> out;
    detail::push_matrix(out, "patch_embed.weight", w.patch_w);
    detail::push_vector(out, "patch_embed.bias", w.patch_b);
    detail::push_vector(out, "cls_token", w.cls_token);
    detail::push_matrix(out, "pos_embed", w.pos_embed);
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        const BlockWeights& b = w.blocks[i];
        detail::push_vector(out, p + "ln1.gamma", b.ln1_gamma);
        detail::push_vector(out, p + "ln1.beta", b.ln1_beta);
        detail::push_matrix(out, p + "attn.qkv.weight", b.w_qkv);
        detail::push_vector(out, p + "attn.qkv.bias", b.b_qkv);
        detail::push_matrix(out, p + "attn.proj.weight", b.w_proj);
        detail::push_vector(out, p + "attn.proj.bias", b.b_proj);
        detail::push_vector(out, p + "ln2.gamma", b.ln2_gamma);
        detail::push_vector(out, p + "ln2.beta", b.ln2_beta);
        detail::push_matrix(out, p + "mlp.fc1.weight", b.w_fc1);
        detail::push_vector(out, p + "mlp.fc1.bias", b.b_fc1);
        detail::push_matrix(out, p + "mlp.fc2.weight", b.w_fc2);
        detail::push_vector(out, p + "mlp.fc2.bias", b.b_fc2);
    }
    detail::push_vector(out, "norm.gamma", w.norm_gamma);
    detail::push_vector(out, "norm.beta", w.norm_beta);
    detail::push_matrix(out, "head.weight", w.head_w);
    detail::push_vector(out, "head.bias", w.head_b);
    for (std::size_t s = 0; s < w.score_heads.size(); ++s) {
        const std::string p = "score_heads." + std::to_string(s) + ".";
        const ScoreHeadWeights& h = w.score_heads[s];
        detail::push_matrix(out, p + "local.weight", h.w_local);
        detail::push_vector(out, p + "local.bias", h.b_local);
        detail::push_matrix(out, p + "fc1.weight", h.w_fc1);
        detail::push_vector(out, p + "fc1.bias", h.b_fc1);
        detail::push_matrix(out, p + "fc2.weight", h.w_fc2);
        detail::push_vector(out, p + "fc2.bias", h.b_fc2);
    }
    return out;
}

inline ModelWeights weights_from_entries(const ModelConfig& cfg,
                                         std::vector<TensorEntry> entries) {
    cfg.validate();
    detail::EntryMap map(std::move(entries));
    ModelWeights w;
    w.patch_w = map.matrix("patch_embed.weight");
    w.patch_b = map.vector("patch_embed.bias");
    w.cls_token = map.vector("cls_token");
    w.pos_embed = map.matrix("pos_embed");
    if (w.patch_w.rows != 3 * cfg.patch_size * cfg.patch_size || w.patch_w.cols != cfg.embed_dim)
        throw IoError("weights: 'patch_embed.weight' shape disagrees with model config");
    if (w.pos_embed.rows != cfg.num_tokens() || w.pos_embed.cols != cfg.embed_dim)
        throw IoError("weights: 'pos_embed' shape disagrees with model config");
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        BlockWeights b;
        b.ln1_gamma = map.vector(p + "ln1.gamma");
        b.ln1_beta = map.vector(p + "ln1.beta");
        b.w_qkv = map.matrix(p + "attn.qkv.weight");
        b.b_qkv = map.vector(p + "attn.qkv.bias");
        b.w_proj = map.matrix(p + "attn.proj.weight");
        b.b_proj = map.vector(p + "attn.proj.bias");
        b.ln2_gamma = map.vector(p + "ln2.gamma");
        b.ln2_beta = map.vector(p + "ln2.beta");
        b.w_fc1 = map.matrix(p + "mlp.fc1.weight");
        b.b_fc1 = map.vector(p + "mlp.fc1.bias");
        b.w_fc2 = map.matrix(p + "mlp.fc2.weight");
        b.b_fc2 = map.vector(p + "mlp.fc2.bias");
        w.blocks.push_back(std::move(b));
    }
    w.norm_gamma = map.vector("norm.gamma");
    w.norm_beta = map.vector("norm.beta");
    w.head_w = map.matrix("head.weight");
    w.head_b = map.vector("head.bias");
    for (int s = 0;; ++s) {
        const std::string p = "score_heads." + std::to_string(s) + ".";
        if (!map.has(p + "local.weight")) break;
        ScoreHeadWeights h;
        h.w_local = map.matrix(p + "local.weight");
        h.b_local = map.vector(p + "local.bias");
        h.w_fc1 = map.matrix(p + "fc1.weight");
        h.b_fc1 = map.vector(p + "fc1.bias");
        h.w_fc2 = map.matrix(p + "fc2.weight");
        h.b_fc2 = map.vector(p + "fc2.bias");
        w.score_heads.push_back(std::move(h));
    }
    return w;
}

inline void save_weights(const std::string& manifest_path, const ModelWeights& w) {
    save_fixture(manifest_path, weights_to_entries(w), "weights");
}

inline ModelWeights load_weights(const std::string& manifest_path, const ModelConfig& cfg) {
    std::string kind;
    std::vector<TensorEntry> entries = load_fixture(manifest_path, &kind);
    if (kind != "weights")
        throw IoError("load_weights: fixture " + manifest_path + " has kind '" + kind +
                      "', expected 'weights'");
    return weights_from_entries(cfg, std::move(entries));
}

// Input fixture: an "images" tensor [batch, H, W, 3] and an optional
// "labels" tensor [batch].
struct InputFixture {
    ImageBatch images;
    std::optional<std::vector<int>> labels;
};

inline void save_input(const std::string& manifest_path, const ImageBatch& images,
                       const std::optional<std::vector<int>>& labels = std::nullopt) {
    std::vector<TensorEntry> entries;
    entries.push_back({"images",
                       {images.batch, images.height, images.width, images.channels},
                       images.data});
    if (labels) {
        std::vector<float> lf(labels->begin(), labels->end());
        entries.push_back({"labels", {static_cast<int>(lf.size())}, lf});
    }
    save_fixture(manifest_path, entries, "input");
}

inline InputFixture load_input(const std::string& manifest_path) {
    std::string kind;
    detail::EntryMap map(load_fixture(manifest_path, &kind));
    if (kind != "input")
        throw IoError("load_input: fixture " + manifest_path + " has kind '" + kind +
                      "', expected 'input'");
    const TensorEntry& imgs = map.get("images");
    if (imgs.shape.size() != 4 || imgs.shape[3] != 3)
        throw IoError("load_input: 'images' must have shape [batch, H, W, 3]");
    InputFixture fx;
    fx.images.batch = imgs.shape[0];
    fx.images.height = imgs.shape[1];
    fx.images.width = imgs.shape[2];
    fx.images.channels = imgs.shape[3];
    fx.images.data = imgs.data;
    if (map.has("labels")) {
        const TensorEntry& lab = map.get("labels");
        if (lab.shape.size() != 1 || lab.shape[0] != fx.images.batch)
            throw IoError("load_input: 'labels' must have shape [batch]");
        std::vector<int> labels(lab.data.size());
        for (std::size_t i = 0; i < lab.data.size(); ++i)
            labels[i] = static_cast<int>(lab.data[i]);
        fx.labels = std::move(labels);
    }
    return fx;
}

}  // namespace tps
