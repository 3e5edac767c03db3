#pragma once

#include "occsplat/gaussian.hpp"
#include "occsplat/rng.hpp"

#include <vector>

namespace occsplat {

struct EncodingConfig {
    int frequencies = 10;  // L
    bool include_raw = true;

    int encoded_dim(int input_dim) const {
        return input_dim * 2 * frequencies + (include_raw ? input_dim : 0);
    }
};

// NeRF-style encoding: [x?, sin(2^i pi x), cos(2^i pi x)] for
// i = 0..L-1, frequency-major blocks.
Eigen::VectorXd positional_encoding(const Eigen::VectorXd& x, const EncodingConfig& cfg);
Eigen::VectorXd positional_encoding_backward(const Eigen::VectorXd& x, const EncodingConfig& cfg,
                                             const Eigen::VectorXd& d_encoded);

// Five-layer residual MLP: input layer, three hidden layers with skip
// connections between them, linear output layer. Rectifier activations
// on hidden layers. Parameters live in one flat vector so optimizer
// state can be kept per flat index.
//
//   a1 = relu(W0 x + b0)
//   a2 = relu(W1 a1 + b1 + a1)
//   a3 = relu(W2 a2 + b2 + a2)
//   y  = W3 a3 + b3
class Mlp {
public:
    Mlp() = default;
    Mlp(int input_dim, int hidden_dim, int output_dim);

    int input_dim() const { return in_; }
    int hidden_dim() const { return hidden_; }
    int output_dim() const { return out_; }

    // Hidden layers fan-in-scaled uniform, output layer zeros.
    void init_weights(Rng& rng);

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    struct Cache {
        Eigen::MatrixXd x, z1, a1, s2, a2, s3, a3;
    };

    // Columns are batch entries. Throws on an input dimension mismatch.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

    // Returns d(loss)/d(input); adds parameter gradients into grad
    // (same layout as params()).
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_y,
                             Eigen::VectorXd& grad) const;

private:
    int in_ = 0, hidden_ = 0, out_ = 0;
    Eigen::VectorXd params_;

    Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
    Eigen::Map<Eigen::MatrixXd> weight_mut(int layer);
    Eigen::Map<Eigen::VectorXd> bias_mut(int layer);
    int weight_offset(int layer) const;
    int bias_offset(int layer) const;
    int rows(int layer) const;
    int cols(int layer) const;
};

// The two appearance heads for occluded points plus the prediction op.
struct OcclusionHeads {
    EncodingConfig encoding;      // for the occluded position
    int feature_channels = 16;    // C
    Mlp mlp_sh;                   // -> 3x16 coefficients
    Mlp mlp_opacity;              // -> 1 logit, squashed by sigmoid

    static OcclusionHeads make(int feature_channels, Rng& rng, int hidden_dim = 256);

    Eigen::VectorXd assemble_input(const Eigen::VectorXd& h_agg, const Vec3& x_occ) const;
};

struct OccludedPrediction {
    ShCoeffs sh;
    double alpha;  // in (0,1)
};

// f_occ = MLP_sh(concat(h_agg, gamma(x_occ))), alpha = sigmoid(MLP_opacity(...)).
OccludedPrediction predict_occluded(const OcclusionHeads& heads, const Eigen::VectorXd& h_agg,
                                    const Vec3& x_occ);

}  // namespace occsplat
