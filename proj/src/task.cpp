#include "gse/task.hpp"

#include <cmath>
#include <stdexcept>

#include "gse/losses.hpp"
#include "gse/rng.hpp"

namespace gse {

namespace {

// ratio of each cluster shift's Frobenius norm to the base weight's
constexpr double kShiftRatio = 0.3;
// per-cluster input mean norm as a multiple of sqrt(n); the within-cluster
// spread projects to std 1 on any direction, so 0.5 sqrt(n) keeps clusters
// linearly separable without making the task degenerate
constexpr double kMeanRatio = 0.5;

Vector sample_input(const Vector& mean, RngStream& rng) {
    Vector x(mean.size());
    for (double& v : x) v = rng.next_gaussian();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += mean[i];
    return x;
}

Vector make_target(const Dataset& data, const Vector& x, std::size_t cluster, double noise_std,
                   RngStream& rng) {
    Vector y = matvec(data.w0, x);
    const Vector shift = matvec(data.shifts[cluster], x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += shift[i];
    if (noise_std > 0.0)
        for (double& v : y) v += noise_std * rng.next_gaussian();
    return y;
}

}  // namespace

void TaskSpec::validate() const {
    if (m == 0 || n == 0) throw std::invalid_argument("TaskSpec: zero dims");
    if (num_clusters == 0) throw std::invalid_argument("TaskSpec: num_clusters must be >= 1");
    if (cluster_rank == 0) throw std::invalid_argument("TaskSpec: cluster_rank must be >= 1");
    if (noise_std < 0.0) throw std::invalid_argument("TaskSpec: noise_std must be >= 0");
}

Dataset make_task(const TaskSpec& spec) {
    spec.validate();
    Dataset data;
    data.spec = spec;

    RngStream master(spec.seed, 0);
    RngStream w0_rng = master.substream(1);
    RngStream shift_rng = master.substream(2);
    RngStream mean_rng = master.substream(3);
    RngStream train_rng = master.substream(4);
    RngStream val_rng = master.substream(5);

    data.w0 = gaussian_matrix(spec.m, spec.n, 1.0 / std::sqrt(static_cast<double>(spec.n)),
                              w0_rng);
    const double w0_norm = frob_norm(data.w0);

    data.shifts.reserve(spec.num_clusters);
    for (std::size_t c = 0; c < spec.num_clusters; ++c) {
        const Matrix p = gaussian_matrix(spec.m, spec.cluster_rank, 1.0, shift_rng);
        const Matrix q = gaussian_matrix(spec.cluster_rank, spec.n, 1.0, shift_rng);
        Matrix delta = matmul(p, q);
        const double norm = frob_norm(delta);
        if (norm == 0.0) throw std::runtime_error("make_task: degenerate cluster shift");
        data.shifts.push_back((kShiftRatio * w0_norm / norm) * delta);
    }

    const double mean_norm = kMeanRatio * std::sqrt(static_cast<double>(spec.n));
    data.cluster_means.reserve(spec.num_clusters);
    for (std::size_t c = 0; c < spec.num_clusters; ++c) {
        Vector dir = gaussian_vector(spec.n, 1.0, mean_rng);
        const double norm = std::sqrt(dot(dir, dir));
        for (double& v : dir) v *= mean_norm / norm;
        data.cluster_means.push_back(std::move(dir));
    }

    auto fill_split = [&](std::size_t count, RngStream& rng, std::vector<Vector>& inputs,
                          std::vector<Vector>& targets, std::vector<std::size_t>& ids) {
        inputs.reserve(count);
        targets.reserve(count);
        ids.reserve(count);
        for (std::size_t t = 0; t < count; ++t) {
            const std::size_t c = t % spec.num_clusters;
            Vector x = sample_input(data.cluster_means[c], rng);
            Vector y = make_target(data, x, c, spec.noise_std, rng);
            inputs.push_back(std::move(x));
            targets.push_back(std::move(y));
            ids.push_back(c);
        }
    };
    fill_split(spec.samples_train, train_rng, data.train_inputs, data.train_targets,
               data.train_cluster_ids);
    fill_split(spec.samples_val, val_rng, data.val_inputs, data.val_targets,
               data.val_cluster_ids);
    return data;
}

double oracle_val_loss(const Dataset& data) {
    if (data.val_inputs.empty()) throw std::invalid_argument("oracle_val_loss: empty split");
    double acc = 0.0;
    for (std::size_t t = 0; t < data.val_inputs.size(); ++t) {
        const std::size_t c = data.val_cluster_ids[t];
        Vector pred = matvec(data.w0, data.val_inputs[t]);
        const Vector shift = matvec(data.shifts[c], data.val_inputs[t]);
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += shift[i];
        acc += l1_loss(pred, data.val_targets[t]).first;
    }
    return acc / static_cast<double>(data.val_inputs.size());
}

}  // namespace gse
