#include "shift/proxies.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "shift/errors.hpp"
#include "shift/util.hpp"

namespace shift {

namespace {

// Shortest round-trip decimal form, so signatures are stable and readable.
std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

void validate_pair(const SampleSet& train, const SampleSet& test) {
    if (train.size() == 0 || test.size() == 0)
        fail(ErrorCode::EmptySplit, "proxy needs non-empty train and test splits");
    if (train.dim() != test.dim())
        fail(ErrorCode::DimMismatch,
             "train dim " + std::to_string(train.dim()) + " != test dim " +
                 std::to_string(test.dim()));
    for (auto y : train.y)
        if (y < 0) fail(ErrorCode::OutOfRange, "negative label in train split");
    for (auto y : test.y)
        if (y < 0) fail(ErrorCode::OutOfRange, "negative label in test split");
}

uint32_t class_count(const SampleSet& train, const SampleSet& test) {
    int32_t top = 0;
    for (auto y : train.y) top = std::max(top, y);
    for (auto y : test.y) top = std::max(top, y);
    return uint32_t(top) + 1;
}

// Distance conventions shared with the brute-force oracles in the tests:
// identical accumulation order, doubles throughout.
double cosine_distance(const float* a, const float* b, size_t d) {
    double dot = 0, na = 0, nb = 0;
    for (size_t j = 0; j < d; ++j) {
        dot += double(a[j]) * double(b[j]);
        na += double(a[j]) * double(a[j]);
        nb += double(b[j]) * double(b[j]);
    }
    double sim = (na > 0 && nb > 0) ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
    return 1.0 - sim;
}

double squared_l2(const float* a, const float* b, size_t d) {
    double acc = 0;
    for (size_t j = 0; j < d; ++j) {
        double diff = double(a[j]) - double(b[j]);
        acc += diff * diff;
    }
    return acc;
}

double nn_accuracy(const SampleSet& train, const SampleSet& test, bool cosine,
                   uint32_t k) {
    if (k < 1) fail(ErrorCode::InvalidField, "nearest-neighbor k must be >= 1");
    k = uint32_t(std::min<size_t>(k, train.size()));
    const size_t d = train.dim();
    size_t correct = 0;
    std::vector<std::pair<double, size_t>> dist(train.size());
    for (size_t i = 0; i < test.size(); ++i) {
        const float* q = test.x.row(i);
        for (size_t j = 0; j < train.size(); ++j) {
            double dd = cosine ? cosine_distance(q, train.x.row(j), d)
                               : squared_l2(q, train.x.row(j), d);
            dist[j] = {dd, j};
        }
        int32_t predicted;
        if (k == 1) {
            size_t best = 0;
            for (size_t j = 1; j < train.size(); ++j)
                if (dist[j].first < dist[best].first) best = j; // ties keep lowest index
            predicted = train.y[best];
        } else {
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            std::vector<size_t> votes;
            for (size_t j = 0; j < k; ++j) {
                size_t label = size_t(train.y[dist[j].second]);
                if (votes.size() <= label) votes.resize(label + 1, 0);
                ++votes[label];
            }
            size_t best_label = 0;
            for (size_t l = 1; l < votes.size(); ++l)
                if (votes[l] > votes[best_label]) best_label = l; // ties keep lowest label
            predicted = int32_t(best_label);
        }
        if (predicted == test.y[i]) ++correct;
    }
    return double(correct) / double(test.size());
}

double linear_accuracy(const SampleSet& train, const SampleSet& test,
                       const LinearParams& params) {
    if (params.epochs < 1 || params.batch_size < 1 || params.learning_rate <= 0)
        fail(ErrorCode::InvalidField, "linear proxy needs epochs >= 1, batch_size >= 1, lr > 0");
    auto trained = linear_detail::train_linear(train, params, class_count(train, test));
    const auto& m = trained.model;
    size_t correct = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        const float* x = test.x.row(i);
        size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < m.classes; ++c) {
            double s = m.b[c];
            for (size_t j = 0; j < m.dim; ++j) s += m.wat(c, j) * double(x[j]);
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        if (int32_t(best) == test.y[i]) ++correct;
    }
    return double(correct) / double(test.size());
}

// Pseudo source classes = feature coordinates: P(z|x) = softmax(x). The joint
// is fitted on the train split, the mean log-likelihood taken over test.
void softmax_row(const float* x, size_t d, std::vector<double>& out) {
    double top = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < d; ++j) top = std::max(top, double(x[j]));
    double sum = 0;
    for (size_t j = 0; j < d; ++j) {
        out[j] = std::exp(double(x[j]) - top);
        sum += out[j];
    }
    for (size_t j = 0; j < d; ++j) out[j] /= sum;
}

double leep_score(const SampleSet& train, const SampleSet& test) {
    const size_t d = train.dim();
    const uint32_t classes = class_count(train, test);

    std::vector<double> joint(size_t(classes) * d, 0.0); // P(y, z)
    std::vector<double> pz(d, 0.0);
    std::vector<double> post(d);
    for (size_t i = 0; i < train.size(); ++i) {
        softmax_row(train.x.row(i), d, post);
        double* row = joint.data() + size_t(train.y[i]) * d;
        for (size_t z = 0; z < d; ++z) {
            row[z] += post[z];
            pz[z] += post[z];
        }
    }
    double n = double(train.size());
    for (auto& v : joint) v /= n;
    for (auto& v : pz) v /= n;

    double total = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        softmax_row(test.x.row(i), d, post);
        const double* row = joint.data() + size_t(test.y[i]) * d;
        double lik = 0;
        for (size_t z = 0; z < d; ++z)
            if (pz[z] > 0) lik += (row[z] / pz[z]) * post[z];
        total += std::log(std::max(lik, 1e-300));
    }
    return total / double(test.size());
}

} // namespace

std::string method_signature(const ProxyRequest& r) {
    switch (r.method) {
        case ProxyMethod::CosineNN:
            return "cosine_nn(k=" + std::to_string(r.k) + ")";
        case ProxyMethod::EuclideanNN:
            return "euclidean_nn(k=" + std::to_string(r.k) + ")";
        case ProxyMethod::Linear:
            return "linear(lr=" + fmt_double(r.linear.learning_rate) +
                   ",l2=" + fmt_double(r.linear.l2_regularizer) +
                   ",batch=" + std::to_string(r.linear.batch_size) +
                   ",epochs=" + std::to_string(r.linear.epochs) +
                   ",seed=" + std::to_string(r.linear.seed) + ")";
        case ProxyMethod::LEEP:
            return "leep()";
    }
    fail(ErrorCode::UnsupportedMethod, "unhandled proxy method");
}

double compute_proxy(const SampleSet& train, const SampleSet& test,
                     const ProxyRequest& request) {
    validate_pair(train, test);
    switch (request.method) {
        case ProxyMethod::CosineNN: return nn_accuracy(train, test, true, request.k);
        case ProxyMethod::EuclideanNN: return nn_accuracy(train, test, false, request.k);
        case ProxyMethod::Linear: return linear_accuracy(train, test, request.linear);
        case ProxyMethod::LEEP: return leep_score(train, test);
    }
    fail(ErrorCode::UnsupportedMethod, "unhandled proxy method");
}

namespace linear_detail {

double ce_loss(const LinearModel& m, const SampleSet& data, double l2) {
    std::vector<double> logits(m.classes);
    double total = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const float* x = data.x.row(i);
        double top = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < m.classes; ++c) {
            double s = m.b[c];
            for (size_t j = 0; j < m.dim; ++j) s += m.wat(c, j) * double(x[j]);
            logits[c] = s;
            top = std::max(top, s);
        }
        double sum = 0;
        for (size_t c = 0; c < m.classes; ++c) sum += std::exp(logits[c] - top);
        total += -(logits[size_t(data.y[i])] - top - std::log(sum));
    }
    double reg = 0;
    for (auto w : m.w) reg += w * w;
    return total / double(data.size()) + 0.5 * l2 * reg;
}

LinearModel ce_grad(const LinearModel& m, const SampleSet& batch) {
    LinearModel g;
    g.classes = m.classes;
    g.dim = m.dim;
    g.w.assign(m.w.size(), 0.0);
    g.b.assign(m.b.size(), 0.0);
    std::vector<double> logits(m.classes), probs(m.classes);
    for (size_t i = 0; i < batch.size(); ++i) {
        const float* x = batch.x.row(i);
        double top = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < m.classes; ++c) {
            double s = m.b[c];
            for (size_t j = 0; j < m.dim; ++j) s += m.wat(c, j) * double(x[j]);
            logits[c] = s;
            top = std::max(top, s);
        }
        double sum = 0;
        for (size_t c = 0; c < m.classes; ++c) {
            probs[c] = std::exp(logits[c] - top);
            sum += probs[c];
        }
        for (size_t c = 0; c < m.classes; ++c) {
            double delta = probs[c] / sum - (int32_t(c) == batch.y[i] ? 1.0 : 0.0);
            g.b[c] += delta;
            for (size_t j = 0; j < m.dim; ++j) g.wat(c, j) += delta * double(x[j]);
        }
    }
    double inv = 1.0 / double(batch.size());
    for (auto& v : g.w) v *= inv;
    for (auto& v : g.b) v *= inv;
    return g;
}

TrainResult train_linear(const SampleSet& train, const LinearParams& params,
                         uint32_t n_classes) {
    const size_t d = train.dim(), n = train.size();
    LinearModel m;
    m.classes = n_classes;
    m.dim = d;
    m.w.resize(size_t(n_classes) * d);
    m.b.assign(n_classes, 0.0);
    {
        Rng rng(derive_seed(params.seed, "linear-init"));
        double limit = std::sqrt(6.0 / double(d + n_classes));
        for (auto& w : m.w) w = rng.uniform(-limit, limit);
    }

    Rng shuffler(derive_seed(params.seed, "linear-shuffle"));
    std::vector<uint64_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    TrainResult result;
    for (uint32_t e = 0; e < params.epochs; ++e) {
        shuffler.shuffle(order);
        for (size_t start = 0; start < n; start += params.batch_size) {
            size_t stop = std::min(n, start + size_t(params.batch_size));
            Matrix bx(stop - start, d);
            std::vector<int32_t> by(stop - start);
            for (size_t i = start; i < stop; ++i) {
                std::copy_n(train.x.row(order[i]), d, bx.row(i - start));
                by[i - start] = train.y[order[i]];
            }
            SampleSet batch(std::move(bx), std::move(by));
            LinearModel g = ce_grad(m, batch);
            for (size_t idx = 0; idx < m.w.size(); ++idx)
                m.w[idx] -= params.learning_rate *
                            (g.w[idx] + params.l2_regularizer * m.w[idx]);
            for (size_t c = 0; c < m.classes; ++c)
                m.b[c] -= params.learning_rate * g.b[c];
        }
        result.epoch_losses.push_back(ce_loss(m, train, params.l2_regularizer));
    }
    result.model = std::move(m);
    return result;
}

} // namespace linear_detail

} // namespace shift
