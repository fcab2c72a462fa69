#include "eval/protocols.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace tcdiv::eval {
namespace {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenMat>;

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    double e = std::exp(u);
    return e / (1.0 + e);
}

void check_features(const ad::Tensor& x, const std::vector<int32_t>& y, const char* where) {
    if (x.rank() != 2)
        throw InvalidArgument(std::string(where) + ": features must be rank-2, got " +
                              x.shape_string());
    if (x.dim(0) != static_cast<int64_t>(y.size()))
        throw InvalidArgument(std::string(where) + ": " + std::to_string(x.dim(0)) +
                              " feature rows vs " + std::to_string(y.size()) + " labels");
    for (int32_t v : y)
        if (v != 0 && v != 1)
            throw InvalidArgument(std::string(where) + ": labels must be 0 or 1, got " +
                                  std::to_string(v));
}

void check_outputs(const FrozenOutputs& o, const char* name) {
    if (o.n() < 1) throw InvalidArgument(std::string(name) + ": empty model outputs");
    if (o.labels.empty()) throw InvalidArgument(std::string(name) + ": empty split");
    if (o.probs.size() != o.reps.size())
        throw InvalidArgument(std::string(name) + ": reps/probs model count mismatch");
    for (int j = 0; j < o.n(); ++j) {
        const ad::Tensor& r = o.reps[static_cast<size_t>(j)];
        const ad::Tensor& p = o.probs[static_cast<size_t>(j)];
        if (r.rank() != 2 || r.dim(0) != o.rows() || r.dim(1) != o.reps[0].dim(1))
            throw InvalidArgument(std::string(name) + ": bad rep shape " + r.shape_string() +
                                  " for model " + std::to_string(j));
        if (p.rank() != 1 || p.dim(0) != o.rows())
            throw InvalidArgument(std::string(name) + ": bad prob shape " + p.shape_string() +
                                  " for model " + std::to_string(j));
    }
}

void check_splits(const FrozenOutputs& train, const FrozenOutputs& val,
                  const FrozenOutputs& test) {
    check_outputs(train, "adapt_train");
    check_outputs(val, "adapt_val");
    check_outputs(test, "adapt_test");
    if (val.n() != train.n() || test.n() != train.n())
        throw InvalidArgument("protocol: splits disagree on model count");
    if (val.reps[0].dim(1) != train.reps[0].dim(1) || test.reps[0].dim(1) != train.reps[0].dim(1))
        throw InvalidArgument("protocol: splits disagree on representation width");
}

// Largest curvature of the objective: the logistic Hessian is bounded by
// (1/4N) Xa' Xa + 2*l2 I over the bias-augmented design matrix Xa. The top
// singular value comes from a short power iteration.
double step_size(ConstMap x, double l2) {
    int64_t n = x.rows(), d = x.cols();
    Rng rng(0x706f776572);
    Eigen::VectorXd v(d + 1);
    for (int64_t i = 0; i <= d; ++i) v(i) = rng.normal();
    v.normalize();
    double sigma2 = 0.0;
    for (int iter = 0; iter < 60; ++iter) {
        Eigen::VectorXd u = x * v.head(d) + Eigen::VectorXd::Constant(n, v(d));
        Eigen::VectorXd w(d + 1);
        w.head(d) = x.transpose() * u;
        w(d) = u.sum();
        sigma2 = w.norm();
        if (sigma2 == 0.0) break;
        v = w / sigma2;
    }
    double lip = sigma2 / (4.0 * static_cast<double>(n)) + 2.0 * l2;
    return 1.0 / (1.01 * lip);
}

}  // namespace

ad::Tensor ensemble_features(const FrozenOutputs& o) {
    int64_t rows = o.rows();
    ad::Tensor out({rows, static_cast<int64_t>(o.n())});
    for (int j = 0; j < o.n(); ++j)
        for (int64_t i = 0; i < rows; ++i) out.at(i, j) = o.probs[static_cast<size_t>(j)][i];
    return out;
}

ad::Tensor linear_features(const FrozenOutputs& o) {
    int64_t rows = o.rows();
    int64_t width = o.reps[0].dim(1);
    ad::Tensor out({rows, width * o.n()});
    for (int j = 0; j < o.n(); ++j) {
        const ad::Tensor& r = o.reps[static_cast<size_t>(j)];
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t c = 0; c < width; ++c) out.at(i, j * width + c) = r.at(i, c);
    }
    return out;
}

double argmax_accuracy(const ad::Tensor& probs, const std::vector<int32_t>& labels) {
    if (probs.rank() != 1 || probs.dim(0) != static_cast<int64_t>(labels.size()))
        throw InvalidArgument("argmax_accuracy: " + probs.shape_string() + " probabilities vs " +
                              std::to_string(labels.size()) + " labels");
    int64_t hits = 0;
    for (int64_t i = 0; i < probs.dim(0); ++i) {
        int32_t pred = probs[i] > 0.5 ? 1 : 0;
        if (pred == labels[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.dim(0));
}

FrozenOutputs compute_frozen_outputs(const nets::ModelCollection& collection,
                                     const data::ColoredDataset& ds) {
    if (collection.n() < 1) throw InvalidArgument("compute_frozen_outputs: empty collection");
    if (ds.size() < 1) throw InvalidArgument("compute_frozen_outputs: empty dataset");
    if (collection.input_dim() != ds.input_dim())
        throw InvalidArgument("compute_frozen_outputs: collection expects input width " +
                              std::to_string(collection.input_dim()) + ", dataset has " +
                              std::to_string(ds.input_dim()));
    FrozenOutputs out;
    out.labels = ds.labels;
    int64_t rows = ds.size();
    for (const nets::ModelPair& m : collection.models) {
        ad::Tape t;
        ad::NodeId x = t.constant(ds.inputs);
        nets::BoundRep rep = nets::bind_frozen(t, m.rep);
        nets::BoundClassifier cls = nets::bind_frozen(t, m.cls);
        ad::NodeId h = nets::rep_forward(t, rep, x);
        ad::NodeId z = nets::classifier_logits(t, cls, h);
        out.reps.push_back(t.value(h));
        const ad::Tensor& logits = t.value(z);
        ad::Tensor p({rows});
        for (int64_t i = 0; i < rows; ++i) p[i] = sigmoid(logits.at(i, 1) - logits.at(i, 0));
        out.probs.push_back(std::move(p));
    }
    return out;
}

LogRegModel fit_logreg(const ad::Tensor& features, const std::vector<int32_t>& labels,
                       double l2) {
    check_features(features, labels, "fit_logreg");
    if (!(l2 >= 0.0) || !std::isfinite(l2))
        throw InvalidArgument("fit_logreg: l2 strength must be finite and >= 0");
    int64_t n = features.dim(0), d = features.dim(1);
    if (n < 2) throw InvalidArgument("fit_logreg: need at least 2 rows");
    int64_t positives = 0;
    for (int32_t v : labels) positives += v;
    if (positives == 0 || positives == n)
        throw InvalidArgument("fit_logreg: labels must contain both classes");

    ConstMap x(features.data(), n, d);
    Eigen::VectorXd y(n);
    for (int64_t i = 0; i < n; ++i) y(i) = labels[static_cast<size_t>(i)];

    double step = step_size(x, l2);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    for (int iter = 0; iter < 10000; ++iter) {
        Eigen::VectorXd z = x * w + Eigen::VectorXd::Constant(n, b);
        Eigen::VectorXd r(n);
        for (int64_t i = 0; i < n; ++i) r(i) = (sigmoid(z(i)) - y(i)) / static_cast<double>(n);
        Eigen::VectorXd gw = x.transpose() * r + 2.0 * l2 * w;
        double gb = r.sum();
        if (std::sqrt(gw.squaredNorm() + gb * gb) < 1e-6) break;
        w -= step * gw;
        b -= step * gb;
    }

    LogRegModel model;
    model.w = ad::Tensor({d});
    for (int64_t i = 0; i < d; ++i) model.w[i] = w(i);
    model.b = b;
    model.l2 = l2;
    return model;
}

double logreg_accuracy(const LogRegModel& model, const ad::Tensor& features,
                       const std::vector<int32_t>& labels) {
    check_features(features, labels, "logreg_accuracy");
    if (features.dim(1) != model.w.dim(0))
        throw InvalidArgument("logreg_accuracy: model expects width " +
                              std::to_string(model.w.dim(0)) + ", features have " +
                              std::to_string(features.dim(1)));
    int64_t n = features.dim(0), d = features.dim(1);
    ConstMap x(features.data(), n, d);
    ConstMap wv(model.w.data(), d, 1);
    Eigen::VectorXd z = x * wv + Eigen::VectorXd::Constant(n, model.b);
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
        int32_t pred = z(i) > 0.0 ? 1 : 0;
        if (pred == labels[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

LogRegModel fit_logreg_grid(const ad::Tensor& train_x, const std::vector<int32_t>& train_y,
                            const ad::Tensor& val_x, const std::vector<int32_t>& val_y,
                            std::span<const double> grid) {
    if (grid.empty()) throw InvalidArgument("fit_logreg_grid: empty l2 grid");
    LogRegModel best;
    double best_acc = -1.0;
    for (double l2 : grid) {
        LogRegModel m = fit_logreg(train_x, train_y, l2);
        double acc = logreg_accuracy(m, val_x, val_y);
        if (acc > best_acc) {
            best_acc = acc;
            best = std::move(m);
        }
    }
    return best;
}

double protocol_best(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                     const FrozenOutputs& adapt_test) {
    check_splits(adapt_train, adapt_val, adapt_test);
    int pick = 0;
    double best_acc = -1.0;
    for (int j = 0; j < adapt_val.n(); ++j) {
        double acc = argmax_accuracy(adapt_val.probs[static_cast<size_t>(j)], adapt_val.labels);
        if (acc > best_acc) {
            best_acc = acc;
            pick = j;
        }
    }
    return argmax_accuracy(adapt_test.probs[static_cast<size_t>(pick)], adapt_test.labels);
}

double protocol_ensemble(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                         const FrozenOutputs& adapt_test, std::span<const double> grid,
                         double* chosen_l2) {
    check_splits(adapt_train, adapt_val, adapt_test);
    LogRegModel m = fit_logreg_grid(ensemble_features(adapt_train), adapt_train.labels,
                                    ensemble_features(adapt_val), adapt_val.labels, grid);
    if (chosen_l2 != nullptr) *chosen_l2 = m.l2;
    return logreg_accuracy(m, ensemble_features(adapt_test), adapt_test.labels);
}

double protocol_linear(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                       const FrozenOutputs& adapt_test, std::span<const double> grid,
                       double* chosen_l2) {
    check_splits(adapt_train, adapt_val, adapt_test);
    LogRegModel m = fit_logreg_grid(linear_features(adapt_train), adapt_train.labels,
                                    linear_features(adapt_val), adapt_val.labels, grid);
    if (chosen_l2 != nullptr) *chosen_l2 = m.l2;
    return logreg_accuracy(m, linear_features(adapt_test), adapt_test.labels);
}

}  // namespace tcdiv::eval
