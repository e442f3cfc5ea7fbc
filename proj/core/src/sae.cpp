#include "emospace/sae.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include <json.hpp>

#include "emospace/dataio.hpp"
#include "emospace/error.hpp"
#include "emospace/parallel.hpp"

namespace emospace {

void SaeModel::validate() const {
    const std::size_t L = encoder.rows();
    const std::size_t d = encoder.cols();
    if (L == 0 || d == 0) fail(ErrorCode::Shape, "SAE encoder must be non-empty");
    if (encoder_bias.size() != L) fail(ErrorCode::Shape, "SAE encoder bias length must equal L");
    if (decoder.rows() != d || decoder.cols() != L) fail(ErrorCode::Shape, "SAE decoder must be d x L");
    if (threshold.size() != L) fail(ErrorCode::Shape, "SAE threshold length must equal L");
    if (L <= d) {
        fail(ErrorCode::Shape, "SAE must be overcomplete (L = " + std::to_string(L) +
                                   ", d = " + std::to_string(d) + ")");
    }
    for (float t : threshold) {
        if (!(t >= 0.0f) || !std::isfinite(t)) fail(ErrorCode::Range, "SAE thresholds must be finite and >= 0");
    }
}

std::vector<float> SaeModel::decoder_column(std::size_t feature) const {
    if (feature >= width()) fail(ErrorCode::Range, "decoder column out of range");
    std::vector<float> column(hidden_dim());
    for (std::size_t r = 0; r < column.size(); ++r) column[r] = decoder(r, feature);
    return column;
}

Pooling parse_pooling(std::string_view name) {
    if (name == "mean") return Pooling::Mean;
    if (name == "last") return Pooling::Last;
    fail(ErrorCode::InvalidArgument, "unknown pooling mode '" + std::string(name) + "'");
}

std::string_view to_string(Pooling pooling) noexcept {
    return pooling == Pooling::Mean ? "mean" : "last";
}

SparseFeatureVector encode(const SaeModel& sae, std::span<const float> hidden_state) {
    const std::size_t d = sae.hidden_dim();
    if (hidden_state.size() != d) {
        fail(ErrorCode::Shape, "hidden state has length " + std::to_string(hidden_state.size()) +
                                   ", SAE expects " + std::to_string(d));
    }
    for (float v : hidden_state) {
        if (!std::isfinite(v)) fail(ErrorCode::Range, "hidden state contains a non-finite value");
    }
    SparseFeatureVector code;
    code.width = sae.width();
    for (std::size_t i = 0; i < sae.width(); ++i) {
        const auto row = sae.encoder.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(row[j]) * hidden_state[j];
        const auto pre = static_cast<float>(acc + sae.encoder_bias[i]);
        // Jump discontinuity: values exactly at the threshold are dropped.
        if (pre > sae.threshold[i] && pre > 0.0f) {
            code.indices.push_back(static_cast<std::uint32_t>(i));
            code.values.push_back(pre);
        }
    }
    return code;
}

std::vector<SparseFeatureVector> encode_batch(const SaeModel& sae, const MatrixF& states) {
    std::vector<SparseFeatureVector> out(states.rows());
    parallel_for(states.rows(), [&](std::size_t r) { out[r] = encode(sae, states.row(r)); });
    return out;
}

std::vector<float> decode(const SaeModel& sae, const SparseFeatureVector& code) {
    if (code.width != sae.width()) {
        fail(ErrorCode::Shape, "code width " + std::to_string(code.width) + " does not match SAE width " +
                                   std::to_string(sae.width()));
    }
    const std::size_t d = sae.hidden_dim();
    std::vector<double> acc(d, 0.0);
    for (std::size_t k = 0; k < code.indices.size(); ++k) {
        const std::size_t i = code.indices[k];
        const double z = code.values[k];
        for (std::size_t r = 0; r < d; ++r) acc[r] += z * sae.decoder(r, i);
    }
    return {acc.begin(), acc.end()};
}

SparseFeatureVector word_feature_vector(const SaeModel& sae, const MatrixF& token_states, Pooling pooling) {
    if (token_states.rows() == 0) fail(ErrorCode::InsufficientData, "word has no token states");
    if (token_states.cols() != sae.hidden_dim()) {
        fail(ErrorCode::Shape, "token states have " + std::to_string(token_states.cols()) +
                                   " columns, SAE expects " + std::to_string(sae.hidden_dim()));
    }
    if (pooling == Pooling::Last) return encode(sae, token_states.row(token_states.rows() - 1));
    std::vector<double> acc(token_states.cols(), 0.0);
    for (std::size_t t = 0; t < token_states.rows(); ++t) {
        const auto row = token_states.row(t);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += row[j];
    }
    std::vector<float> pooled(acc.size());
    const double n = static_cast<double>(token_states.rows());
    for (std::size_t j = 0; j < acc.size(); ++j) pooled[j] = static_cast<float>(acc[j] / n);
    return encode(sae, pooled);
}

namespace {

std::vector<float> load_vector(const std::filesystem::path& manifest, std::size_t expected, const char* what) {
    MatrixF m = load_matrix(manifest);
    if (m.size() != expected || (m.rows() != 1 && m.cols() != 1)) {
        fail(ErrorCode::Shape, std::string(what) + " must be a vector of length " + std::to_string(expected));
    }
    return m.storage();
}

}  // namespace

SaeModel load_sae(const std::filesystem::path& manifest) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, "invalid SAE manifest " + manifest.string() + ": " + e.what());
    }
    const auto dir = manifest.parent_path();
    auto path_of = [&](const char* key) {
        if (!doc.contains(key) || !doc[key].is_string()) {
            fail(ErrorCode::Format, std::string("SAE manifest is missing '") + key + "'");
        }
        return dir / doc[key].get<std::string>();
    };
    SaeModel sae;
    sae.model_id = doc.value("model_id", std::string{});
    sae.layer_index = doc.value("layer", 0);
    sae.encoder = load_matrix(path_of("W_encoder"));
    sae.decoder = load_matrix(path_of("W_decoder"));
    const std::size_t L = sae.encoder.rows();
    sae.encoder_bias = load_vector(path_of("b_encoder"), L, "b_encoder");
    if (doc.contains("threshold") && !doc["threshold"].is_null()) {
        sae.threshold = load_vector(path_of("threshold"), L, "threshold");
    } else {
        sae.threshold.assign(L, 0.0f);
        sae.threshold_defaulted = true;
        std::clog << "emospace: SAE '" << sae.model_id
                  << "' has no thresholds; using theta = 0 (plain ReLU)\n";
    }
    sae.validate();
    return sae;
}

void write_sae(const std::filesystem::path& manifest, const SaeModel& sae) {
    sae.validate();
    const auto dir = manifest.parent_path();
    const std::string stem = manifest.stem().string();
    const std::size_t L = sae.width();
    auto emit = [&](const std::string& suffix, const MatrixF& m) {
        const std::string name = stem + "." + suffix + ".json";
        write_matrix(dir / name, m);
        return name;
    };
    nlohmann::json doc;
    doc["model_id"] = sae.model_id;
    doc["layer"] = sae.layer_index;
    doc["W_encoder"] = emit("w_enc", sae.encoder);
    doc["b_encoder"] = emit("b_enc", MatrixF(1, L, sae.encoder_bias));
    doc["W_decoder"] = emit("w_dec", sae.decoder);
    if (sae.threshold_defaulted) {
        doc["threshold"] = nullptr;
    } else {
        doc["threshold"] = emit("theta", MatrixF(1, L, sae.threshold));
    }
    write_file_atomic(manifest, doc.dump(2) + "\n");
}

}  // namespace emospace
