#pragma once

// Checkpoint layout (all integers and floats little-endian):
//
//   offset 0   8 bytes   magic "ADVLABCK"
//   offset 8   u32       format version (currently 1)
//   offset 12  u64       byte length L of the header JSON
//   offset 20  L bytes   UTF-8 JSON: name, input_dim, hidden_dims, num_classes,
//                        seed, training{epochs, learning_rate, batch_size, final_accuracy}
//   then, per layer in input-to-output order: weight [fan_in x fan_out] row-major,
//   then bias [fan_out], each entry an IEEE-754 float64.
//
// Nothing may follow the last bias.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advlab/classifier.hpp"
#include "advlab/error.hpp"

namespace advlab {

inline constexpr std::string_view checkpoint_magic = "ADVLABCK";
inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t le(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    double f64(const char* what) { return std::bit_cast<double>(le(8, what)); }

    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw ParseError("checkpoint truncated at byte " + std::to_string(pos_) + " while reading " + what, pos_);
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_model(const TrainedModel& model) {
    const auto& spec = model.spec();
    nlohmann::ordered_json header = {
        {"name", spec.name},
        {"input_dim", spec.input_dim},
        {"hidden_dims", spec.hidden_dims},
        {"num_classes", spec.num_classes},
        {"seed", spec.seed},
        {"training",
         {{"epochs", model.info().epochs},
          {"learning_rate", model.info().learning_rate},
          {"batch_size", model.info().batch_size},
          {"final_accuracy", model.info().final_accuracy}}},
    };
    const std::string json = header.dump();
    std::string out(checkpoint_magic);
    detail::put_le(out, checkpoint_version, 4);
    detail::put_le(out, json.size(), 8);
    out += json;
    for (const auto& layer : model.layers()) {
        for (double v : layer.weight.data()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
        for (double v : layer.bias.data()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    return out;
}

inline TrainedModel parse_model(std::string_view bytes) {
    detail::ByteReader in(bytes);
    if (bytes.size() < checkpoint_magic.size() && checkpoint_magic.substr(0, bytes.size()) == bytes) {
        throw ParseError("checkpoint truncated inside the magic header at byte " + std::to_string(bytes.size()),
                         bytes.size());
    }
    if (bytes.substr(0, checkpoint_magic.size()) != checkpoint_magic) {
        throw VersionError("not an advlab checkpoint (bad magic header)");
    }
    in.take(checkpoint_magic.size(), "magic");
    const auto version = static_cast<std::uint32_t>(in.le(4, "format version"));
    if (version != checkpoint_version) {
        throw VersionError("unsupported checkpoint format version " + std::to_string(version) + " (expected " +
                           std::to_string(checkpoint_version) + ")");
    }
    const std::uint64_t json_len = in.le(8, "header length");
    const std::size_t json_at = in.pos();
    if (json_len > in.remaining()) {
        throw ParseError("checkpoint truncated: header claims " + std::to_string(json_len) + " bytes at byte " +
                             std::to_string(json_at),
                         json_at);
    }
    const std::string_view json_text = in.take(static_cast<std::size_t>(json_len), "header");

    ModelSpec spec;
    TrainingInfo info;
    try {
        const auto j = nlohmann::json::parse(json_text);
        spec.name = j.at("name").get<std::string>();
        spec.input_dim = j.at("input_dim").get<std::size_t>();
        spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        const auto& t = j.at("training");
        info.epochs = t.at("epochs").get<std::size_t>();
        info.learning_rate = t.at("learning_rate").get<double>();
        info.batch_size = t.at("batch_size").get<std::size_t>();
        info.final_accuracy = t.at("final_accuracy").get<double>();
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed checkpoint header JSON at byte " + std::to_string(json_at + e.byte) + ": " +
                             e.what(),
                         json_at + e.byte);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid checkpoint header at byte " + std::to_string(json_at) + ": " + e.what(), json_at);
    }
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw ParseError(std::string("invalid checkpoint header: ") + e.what(), json_at);
    }

    std::vector<DenseLayer> layers;
    for (const auto& [fan_in, fan_out] : spec.layer_dims()) {
        std::vector<double> w(fan_in * fan_out), b(fan_out);
        for (double& v : w) v = in.f64("weights");
        for (double& v : b) v = in.f64("biases");
        layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)), Tensor::vector(std::move(b))});
    }
    if (in.remaining() != 0) {
        throw ParseError("unexpected " + std::to_string(in.remaining()) + " trailing bytes at byte " +
                             std::to_string(in.pos()),
                         in.pos());
    }
    return TrainedModel(std::move(spec), std::move(layers), info);
}

inline void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    const std::string bytes = serialize_model(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("failed writing checkpoint '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open checkpoint '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_model(bytes);
}

} // namespace advlab
