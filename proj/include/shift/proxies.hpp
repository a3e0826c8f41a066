#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shift/data.hpp"

namespace shift {

enum class ProxyMethod { CosineNN, EuclideanNN, Linear, LEEP };

struct LinearParams {
    double learning_rate = 0.1;
    double l2_regularizer = 0.0;
    uint32_t batch_size = 32;
    uint32_t epochs = 5;
    uint64_t seed = 0;
};

struct ProxyRequest {
    ProxyMethod method = ProxyMethod::CosineNN;
    uint32_t k = 1; // nearest-neighbor vote size
    LinearParams linear;
};

// Canonical text form of (method, all hyperparameters). Equal signatures mean
// "the same computation", so this string is part of the proxy cache key.
std::string method_signature(const ProxyRequest& request);

// Accuracy in [0,1] for the NN and Linear methods; mean log-likelihood (<= 0)
// for LEEP. Pure: the value depends only on the inputs and request.
double compute_proxy(const SampleSet& train, const SampleSet& test,
                     const ProxyRequest& request);

// Training internals, exposed so tests can check the gradient against finite
// differences and watch per-epoch loss.
namespace linear_detail {

struct LinearModel {
    size_t classes = 0;
    size_t dim = 0;
    std::vector<double> w; // classes x dim, row-major
    std::vector<double> b; // classes

    double& wat(size_t c, size_t j) { return w[c * dim + j]; }
    double wat(size_t c, size_t j) const { return w[c * dim + j]; }
};

// Mean softmax cross-entropy over the set plus (l2/2)*||w||^2.
double ce_loss(const LinearModel& model, const SampleSet& data, double l2);

// Gradient of mean cross-entropy (without the l2 term) in model layout.
LinearModel ce_grad(const LinearModel& model, const SampleSet& batch);

struct TrainResult {
    LinearModel model;
    std::vector<double> epoch_losses; // full-train loss after each epoch
};

TrainResult train_linear(const SampleSet& train, const LinearParams& params,
                         uint32_t n_classes);

} // namespace linear_detail

} // namespace shift
