#include "occsplat/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace occsplat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Eigen::VectorXd positional_encoding(const Eigen::VectorXd& x, const EncodingConfig& cfg) {
    if (cfg.frequencies < 1) throw std::invalid_argument("encoding needs at least one frequency");
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd out(cfg.encoded_dim(d));
    int at = 0;
    if (cfg.include_raw) {
        out.head(d) = x;
        at = d;
    }
    double freq = kPi;
    for (int i = 0; i < cfg.frequencies; ++i, freq *= 2.0) {
        for (int j = 0; j < d; ++j) out[at + j] = std::sin(freq * x[j]);
        for (int j = 0; j < d; ++j) out[at + d + j] = std::cos(freq * x[j]);
        at += 2 * d;
    }
    return out;
}

Eigen::VectorXd positional_encoding_backward(const Eigen::VectorXd& x, const EncodingConfig& cfg,
                                             const Eigen::VectorXd& d_encoded) {
    const int d = static_cast<int>(x.size());
    if (d_encoded.size() != cfg.encoded_dim(d))
        throw std::invalid_argument("encoded gradient size mismatch");
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(d);
    int at = 0;
    if (cfg.include_raw) {
        dx = d_encoded.head(d);
        at = d;
    }
    double freq = kPi;
    for (int i = 0; i < cfg.frequencies; ++i, freq *= 2.0) {
        for (int j = 0; j < d; ++j)
            dx[j] += freq * std::cos(freq * x[j]) * d_encoded[at + j] -
                     freq * std::sin(freq * x[j]) * d_encoded[at + d + j];
        at += 2 * d;
    }
    return dx;
}

Mlp::Mlp(int input_dim, int hidden_dim, int output_dim)
    : in_(input_dim), hidden_(hidden_dim), out_(output_dim) {
    int total = 0;
    for (int l = 0; l < 4; ++l) total += rows(l) * cols(l) + rows(l);
    params_ = Eigen::VectorXd::Zero(total);
}

int Mlp::rows(int layer) const { return layer == 3 ? out_ : hidden_; }
int Mlp::cols(int layer) const { return layer == 0 ? in_ : hidden_; }

int Mlp::weight_offset(int layer) const {
    int at = 0;
    for (int l = 0; l < layer; ++l) at += rows(l) * cols(l) + rows(l);
    return at;
}

int Mlp::bias_offset(int layer) const { return weight_offset(layer) + rows(layer) * cols(layer); }

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
    return {params_.data() + weight_offset(l), rows(l), cols(l)};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
    return {params_.data() + bias_offset(l), rows(l)};
}
Eigen::Map<Eigen::MatrixXd> Mlp::weight_mut(int l) {
    return {params_.data() + weight_offset(l), rows(l), cols(l)};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias_mut(int l) {
    return {params_.data() + bias_offset(l), rows(l)};
}

void Mlp::init_weights(Rng& rng) {
    params_.setZero();
    for (int l = 0; l < 3; ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols(l)));
        auto w = weight_mut(l);
        for (int c = 0; c < w.cols(); ++c)
            for (int r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
    }
    // Output layer stays zero so predictions start neutral.
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    if (x.rows() != in_) throw std::invalid_argument("MLP input dimension mismatch");
    Eigen::MatrixXd z1 = (weight(0) * x).colwise() + bias(0);
    Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    Eigen::MatrixXd s2 = ((weight(1) * a1).colwise() + bias(1)) + a1;
    Eigen::MatrixXd a2 = s2.cwiseMax(0.0);
    Eigen::MatrixXd s3 = ((weight(2) * a2).colwise() + bias(2)) + a2;
    Eigen::MatrixXd a3 = s3.cwiseMax(0.0);
    Eigen::MatrixXd y = (weight(3) * a3).colwise() + bias(3);
    if (cache) {
        cache->x = x;
        cache->z1 = std::move(z1);
        cache->a1 = std::move(a1);
        cache->s2 = std::move(s2);
        cache->a2 = std::move(a2);
        cache->s3 = std::move(s3);
        cache->a3 = std::move(a3);
    }
    return y;
}

namespace {
Eigen::MatrixXd relu_mask_mult(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& grad) {
    return (pre.array() > 0.0).select(grad, 0.0);
}
}  // namespace

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_y,
                              Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
    auto gw = [&](int l) {
        return Eigen::Map<Eigen::MatrixXd>(grad.data() + weight_offset(l), rows(l), cols(l));
    };
    auto gb = [&](int l) {
        return Eigen::Map<Eigen::VectorXd>(grad.data() + bias_offset(l), rows(l));
    };

    gw(3).noalias() += d_y * cache.a3.transpose();
    gb(3) += d_y.rowwise().sum();
    Eigen::MatrixXd da3 = weight(3).transpose() * d_y;

    Eigen::MatrixXd ds3 = relu_mask_mult(cache.s3, da3);
    gw(2).noalias() += ds3 * cache.a2.transpose();
    gb(2) += ds3.rowwise().sum();
    Eigen::MatrixXd da2 = weight(2).transpose() * ds3 + ds3;  // skip connection

    Eigen::MatrixXd ds2 = relu_mask_mult(cache.s2, da2);
    gw(1).noalias() += ds2 * cache.a1.transpose();
    gb(1) += ds2.rowwise().sum();
    Eigen::MatrixXd da1 = weight(1).transpose() * ds2 + ds2;

    Eigen::MatrixXd dz1 = relu_mask_mult(cache.z1, da1);
    gw(0).noalias() += dz1 * cache.x.transpose();
    gb(0) += dz1.rowwise().sum();
    return weight(0).transpose() * dz1;
}

OcclusionHeads OcclusionHeads::make(int feature_channels, Rng& rng, int hidden_dim) {
    OcclusionHeads heads;
    heads.feature_channels = feature_channels;
    const int in_dim = feature_channels + heads.encoding.encoded_dim(3);
    heads.mlp_sh = Mlp(in_dim, hidden_dim, 3 * kShCount);
    heads.mlp_opacity = Mlp(in_dim, hidden_dim, 1);
    heads.mlp_sh.init_weights(rng);
    heads.mlp_opacity.init_weights(rng);
    return heads;
}

Eigen::VectorXd OcclusionHeads::assemble_input(const Eigen::VectorXd& h_agg,
                                               const Vec3& x_occ) const {
    if (h_agg.size() != feature_channels)
        throw std::invalid_argument("aggregated feature has wrong channel count");
    const Eigen::VectorXd enc = positional_encoding(x_occ, encoding);
    Eigen::VectorXd input(h_agg.size() + enc.size());
    input << h_agg, enc;
    return input;
}

OccludedPrediction predict_occluded(const OcclusionHeads& heads, const Eigen::VectorXd& h_agg,
                                    const Vec3& x_occ) {
    const Eigen::VectorXd input = heads.assemble_input(h_agg, x_occ);
    const Eigen::VectorXd f = heads.mlp_sh.forward(input);
    const Eigen::VectorXd o = heads.mlp_opacity.forward(input);
    OccludedPrediction out;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < kShCount; ++k) out.sh(c, k) = f[c * kShCount + k];
    out.alpha = sigmoid(o[0]);
    return out;
}

}  // namespace occsplat
