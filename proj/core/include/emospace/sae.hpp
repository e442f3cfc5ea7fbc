#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emospace/matrix.hpp"
#include "emospace/sparse.hpp"

namespace emospace {

/// Pretrained JumpReLU sparse autoencoder.
///
/// Shapes: encoder L x d, encoder_bias L, decoder d x L, threshold L.
/// Column i of the decoder is the dictionary feature f_i.
struct SaeModel {
    std::string model_id;
    int layer_index = 0;
    MatrixF encoder;
    std::vector<float> encoder_bias;
    MatrixF decoder;
    std::vector<float> threshold;
    /// Set when the weights shipped without thresholds and plain ReLU (theta = 0) is used.
    bool threshold_defaulted = false;

    std::size_t width() const noexcept { return encoder.rows(); }
    std::size_t hidden_dim() const noexcept { return encoder.cols(); }

    /// Checks shape consistency, theta >= 0 and L > d.
    void validate() const;

    std::vector<float> decoder_column(std::size_t feature) const;
};

enum class Pooling { Mean, Last };

Pooling parse_pooling(std::string_view name);
std::string_view to_string(Pooling pooling) noexcept;

/// z_i = a_i if a_i > theta_i else 0, with a = W_enc x + b_enc.
/// Pre-activations accumulate in double and are rounded to float once.
SparseFeatureVector encode(const SaeModel& sae, std::span<const float> hidden_state);

/// Encodes every row of `states` (n x d). Rows are independent and may run in parallel.
std::vector<SparseFeatureVector> encode_batch(const SaeModel& sae, const MatrixF& states);

/// x_hat = sum_i z_i f_i.
std::vector<float> decode(const SaeModel& sae, const SparseFeatureVector& code);

/// Pools a word's token hidden states (t x d) and encodes the pooled vector.
SparseFeatureVector word_feature_vector(const SaeModel& sae, const MatrixF& token_states,
                                        Pooling pooling = Pooling::Mean);

/// Loads an SAE described by a JSON manifest:
///   {"model_id": ..., "layer": 9, "W_encoder": "w_enc.json", "b_encoder": "b_enc.json",
///    "W_decoder": "w_dec.json", "threshold": "theta.json"}
/// Matrix entries name MatrixContainer manifests relative to the SAE manifest.
/// Bias and threshold containers are 1 x L. "threshold" may be omitted.
SaeModel load_sae(const std::filesystem::path& manifest);

/// Writes the SAE as a manifest plus four matrix containers in the manifest's directory.
void write_sae(const std::filesystem::path& manifest, const SaeModel& sae);

}  // namespace emospace
