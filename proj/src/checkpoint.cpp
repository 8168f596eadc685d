#include "ccnl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

using nlohmann::json;

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
    std::size_t left = bytes.size();
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64_le(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace

std::string serialize_checkpoint(const CcnlModel& model) {
    json header;
    header["config"] = json::parse(config_to_json(model.config()));
    header["ablation"] = std::string(ablation_tag(model.config().ablation));
    json vocabs = json::array();
    for (const Tower& t : model.towers()) {
        vocabs.push_back({{"tower", t.name}, {"tokens", t.embeddings.vocab.tokens()}});
    }
    header["vocabularies"] = vocabs;
    json tensors = json::array();
    const auto params = model.parameters();
    for (const Parameter* p : params) {
        tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"dtype", "f64"}});
    }
    header["tensors"] = tensors;
    const std::string header_text = header.dump();

    std::string out(kCheckpointMagic);
    out += std::to_string(header_text.size());
    out += '\n';
    out += header_text;
    for (const Parameter* p : params) {
        for (double x : p->value.values()) put_u64_le(out, std::bit_cast<std::uint64_t>(x));
    }
    const std::uint32_t crc = crc32_of(out);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xffu));
    return out;
}

CcnlModel deserialize_checkpoint(std::string_view bytes, const std::string& source_name) {
    const auto fail = [&](const std::string& what) { return ParseError(source_name + ": " + what); };
    if (bytes.size() < kCheckpointMagic.size() + 4 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw fail("not a CCNL checkpoint");
    }
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) {
        stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body.size() + i])) << (8 * i);
    }
    if (crc32_of(body) != stored) throw ChecksumError(source_name + ": checkpoint checksum mismatch");

    std::size_t pos = kCheckpointMagic.size();
    const std::size_t newline = body.find('\n', pos);
    if (newline == std::string_view::npos) throw fail("missing header length");
    std::size_t header_len = 0;
    try {
        header_len = std::stoull(std::string(body.substr(pos, newline - pos)));
    } catch (const std::exception&) {
        throw fail("bad header length");
    }
    pos = newline + 1;
    if (header_len > body.size() - pos) throw fail("header length exceeds file size");
    json header;
    try {
        header = json::parse(body.substr(pos, header_len));
    } catch (const json::exception& e) {
        throw fail(std::string("malformed header: ") + e.what());
    }
    pos += header_len;

    ModelConfig config;
    std::vector<EmbeddingMatrix> embeddings;
    std::vector<std::pair<std::string, Shape>> listed;
    try {
        config = config_from_json(header.at("config").dump());
        if (parse_ablation(header.at("ablation").get<std::string>()) != config.ablation) {
            throw fail("ablation tag disagrees with config");
        }
        for (const auto& v : header.at("vocabularies")) {
            EmbeddingMatrix e;
            e.vocab = Vocabulary(v.at("tokens").get<std::vector<std::string>>());
            e.table = Parameter(v.at("tower").get<std::string>() + ".embedding",
                                Tensor(Shape{e.vocab.size(), config.embedding_dim}));
            embeddings.push_back(std::move(e));
        }
        for (const auto& t : header.at("tensors")) {
            if (t.at("dtype").get<std::string>() != "f64") throw fail("unsupported dtype " + t.at("dtype").dump());
            listed.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
        }
    } catch (const json::exception& e) {
        throw fail(std::string("malformed header: ") + e.what());
    }

    Rng rng(0);
    CcnlModel model(config, std::move(embeddings), rng);
    auto params = model.parameters();
    if (params.size() != listed.size()) {
        throw DimensionError(source_name + ": checkpoint lists " + std::to_string(listed.size()) +
                             " tensors, architecture has " + std::to_string(params.size()));
    }
    std::size_t payload = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->name != listed[i].first || params[i]->value.shape() != listed[i].second) {
            throw DimensionError(source_name + ": tensor " + listed[i].first + " " + shape_string(listed[i].second) +
                                 " does not match " + params[i]->name + " " + shape_string(params[i]->value.shape()));
        }
        payload += params[i]->value.size();
    }
    if (body.size() - pos != payload * 8) throw fail("payload size does not match tensor list");
    for (Parameter* p : params) {
        for (double& x : p->value.values()) {
            x = std::bit_cast<double>(get_u64_le(body.data() + pos));
            pos += 8;
        }
        if (!p->value.all_finite()) throw fail("non-finite values in " + p->name);
    }
    return model;
}

void save_checkpoint(const CcnlModel& model, const std::string& path) {
    const std::string bytes = serialize_checkpoint(model);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + path + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing checkpoint '" + path + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

CcnlModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, path);
}

}  // namespace ccnl
