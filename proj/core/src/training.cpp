#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fullface/error.hpp"
#include "fullface/network.hpp"

namespace fullface {
namespace {

double single_loss(const Network& net, const Tensor& input, std::span<const double> target) {
  const Tensor y = net.forward(input);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += std::abs(y[i] - target[i]);
  return loss;
}

std::array<double, 2> standardized(const std::array<double, 2>& t, const TrainedModel& m) {
  return {(t[0] - m.target_offset[0]) / m.target_scale[0],
          (t[1] - m.target_offset[1]) / m.target_scale[1]};
}

}  // namespace

TrainedModel train(const ModelConfig& config, const std::vector<TrainingExample>& train_set,
                   const std::vector<TrainingExample>& val_set) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");

  TrainedModel model;
  model.config = config;
  for (int d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (const auto& ex : train_set) mean += ex.target[d];
    mean /= static_cast<double>(train_set.size());
    double var = 0.0;
    for (const auto& ex : train_set) var += (ex.target[d] - mean) * (ex.target[d] - mean);
    var /= static_cast<double>(train_set.size());
    model.target_offset[d] = mean;
    model.target_scale[d] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }

  model.network = init_parameters(config, config.seed);
  Network velocity(config);
  Network grad(config);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  auto params = model.network.parameters();
  auto grads = grad.parameters();
  auto vels = velocity.parameters();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      grad.set_zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train_set[order[k]];
        const auto target = standardized(ex.target, model);
        batch_loss += model.network.accumulate_gradient(ex.input, target, weight, grad,
                                                        WeightMapGradient::channel_averaged);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start));
      }
      epoch_loss += batch_loss;
      bool finite = true;
      for (std::size_t p = 0; p < params.size(); ++p) {
        double* w = params[p]->data();
        double* v = vels[p]->data();
        const double* g = grads[p]->data();
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
          v[i] = config.momentum * v[i] - config.learning_rate * g[i];
          w[i] += v[i];
          finite = finite && std::isfinite(w[i]);
        }
      }
      if (!finite) {
        throw DivergenceError("training diverged: non-finite parameters at epoch " +
                              std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start));
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(train_set.size());
    entry.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_set.empty()) {
      double val = 0.0;
      for (const auto& ex : val_set) {
        const auto target = standardized(ex.target, model);
        val += single_loss(model.network, ex.input, target);
      }
      entry.val_loss = val / static_cast<double>(val_set.size());
    }
    if (!std::isfinite(entry.train_loss)) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    }
    model.log.push_back(entry);
  }
  return model;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const Network& net, const Tensor& input,
                           std::span<const double> target, const GradCheckOptions& options) {
  Network exact(net.config());
  Network averaged(net.config());
  exact.set_zero();
  averaged.set_zero();
  net.accumulate_gradient(input, target, 1.0, exact, WeightMapGradient::exact);
  net.accumulate_gradient(input, target, 1.0, averaged, WeightMapGradient::channel_averaged);

  Network probe = net;
  auto probe_params = probe.parameters();
  const auto exact_params = std::as_const(exact).parameters();
  const auto averaged_params = std::as_const(averaged).parameters();
  const auto names = net.parameter_names();
  const auto spatial = net.spatial_parameter_indices();
  const double channels = net.spatial() ? static_cast<double>(net.spatial()->channels()) : 1.0;

  GradCheckReport report;
  const std::vector<int> base_pattern = net.activation_pattern(input);
  std::mt19937_64 rng(options.seed);
  for (std::size_t p = 0; p < probe_params.size(); ++p) {
    Tensor& tensor = *probe_params[p];
    std::vector<std::size_t> entries(tensor.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (entries.size() > options.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    const bool is_spatial = std::find(spatial.begin(), spatial.end(), p) != spatial.end();
    GradCheckGroup group{names[p], entries.size(), 0.0, is_spatial};
    for (std::size_t i : entries) {
      const double original = tensor[i];
      double step = options.epsilon;
      double numeric = 0.0;
      for (int attempt = 0;; ++attempt) {
        tensor[i] = original + step;
        const double plus = single_loss(probe, input, target);
        const bool plus_same = probe.activation_pattern(input) == base_pattern;
        tensor[i] = original - step;
        const double minus = single_loss(probe, input, target);
        const bool minus_same = probe.activation_pattern(input) == base_pattern;
        tensor[i] = original;
        numeric = (plus - minus) / (2.0 * step);
        if ((plus_same && minus_same) || attempt == options.max_refinements) break;
        step *= 0.1;
        if (attempt == 0) ++report.refined;
      }

      const double e = relative_error((*exact_params[p])[i], numeric);
      group.max_rel_error = std::max(group.max_rel_error, e);
      report.max_rel_error = std::max(report.max_rel_error, e);
      if (is_spatial) {
        const double es = relative_error(channels * (*averaged_params[p])[i], numeric);
        report.max_spatial_rel_error = std::max(report.max_spatial_rel_error, es);
      }
    }
    report.groups.push_back(group);
  }
  return report;
}

GradCheckReport random_grad_check(const ModelConfig& config, std::uint64_t seed,
                                  const GradCheckOptions& options) {
  const Network net = init_parameters(config, seed);
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5a5a5a5a5ULL);
  std::uniform_real_distribution<double> pixel(-0.5, 0.5);
  std::normal_distribution<double> target_dist(0.0, 1.0);
  Tensor input({static_cast<std::size_t>(config.input_channels),
                static_cast<std::size_t>(config.input_size),
                static_cast<std::size_t>(config.input_size)});
  for (double& v : input.values()) v = pixel(rng);
  const Tensor y = net.forward(input);
  std::vector<double> target(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    do {
      target[i] = target_dist(rng);
    } while (std::abs(y[i] - target[i]) < 1e-2);
  }
  GradCheckOptions o = options;
  o.seed = seed;
  return grad_check(net, input, target, o);
}

}  // namespace fullface
