#include "scanfeat/featnet/train.hpp"

#include <fstream>

namespace scanfeat::featnet {

namespace {

struct Momentum {
  WeightGradients velocity;

  explicit Momentum(const NetworkWeights& w)
      : velocity(WeightGradients::zeros_like(w)) {}

  void apply(NetworkWeights& w, const WeightGradients& grads,
             const TrainConfig& cfg) {
    const auto step = [&](ConvLayer& vel, ConvLayer& weights,
                          const ConvLayer& g) {
      vel.weight = cfg.momentum * vel.weight - cfg.learning_rate * g.weight;
      vel.bias = cfg.momentum * vel.bias - cfg.learning_rate * g.bias;
      weights.weight += vel.weight;
      weights.bias += vel.bias;
    };
    for (std::size_t i = 0; i < w.trunk.size(); ++i) {
      step(velocity.trunk[i], w.trunk[i], grads.trunk[i]);
    }
    step(velocity.desc_head, w.desc_head, grads.desc_head);
    step(velocity.rel_head, w.rel_head, grads.rel_head);
    step(velocity.rep_head, w.rep_head, grads.rep_head);
  }
};

}  // namespace

TrainResult train(const NetworkConfig& config, NetworkWeights initial,
                  const std::vector<TrainSample>& synthetic,
                  const std::vector<TrainSample>& real,
                  const TrainSchedule& schedule, const TrainConfig& train_cfg,
                  std::uint64_t seed) {
  check_weights(config, initial);
  TrainResult result;
  result.weights = std::move(initial);
  Momentum momentum(result.weights);
  Rng rng(Rng::mix(seed, 0x7261696eULL));

  double initial_total = -1.0;
  std::size_t step = 0;
  const auto run_stage = [&](const std::vector<const TrainSample*>& samples,
                             int epochs, bool offset_scale) -> bool {
    if (samples.empty() || epochs <= 0) return true;
    AugmentConfig aug = train_cfg.augment;
    aug.enable_offset_scale = offset_scale && aug.enable_offset_scale;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      rng.shuffle(order);
      const std::size_t batch =
          std::max<std::size_t>(1, static_cast<std::size_t>(train_cfg.batch_size));
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t count = std::min(batch, order.size() - start);
        WeightGradients grads = WeightGradients::zeros_like(result.weights);
        CurvePoint point;
        point.step = ++step;
        std::size_t used = 0;
        for (std::size_t k = 0; k < count; ++k) {
          const TrainSample sample =
              augment(*samples[order[start + k]], aug, rng);
          ForwardCache cache_a, cache_b;
          const DenseFeatureMap map_a =
              forward(sample.image_a, config, result.weights, &cache_a);
          const DenseFeatureMap map_b =
              forward(sample.image_b, config, result.weights, &cache_b);
          MapGradients ga, gb;
          LossBreakdown lb;
          try {
            lb = loss(map_a, map_b, sample.flow, sample.image_a.valid,
                      sample.image_b.valid, train_cfg.loss, &ga, &gb);
          } catch (const NoValidCorrespondences&) {
            continue;  // degenerate crop, skip it
          }
          const double inv = 1.0 / static_cast<double>(count);
          WeightGradients sample_grads =
              WeightGradients::zeros_like(result.weights);
          backward(config, result.weights, cache_a, map_a, ga, &sample_grads);
          backward(config, result.weights, cache_b, map_b, gb, &sample_grads);
          grads.add_scaled(sample_grads, inv);
          point.total += lb.total * inv;
          point.repeatability += lb.repeatability * inv;
          point.peakiness += lb.peakiness * inv;
          point.reliability += lb.reliability * inv;
          ++used;
        }
        if (used == 0) continue;
        momentum.apply(result.weights, grads, train_cfg);
        result.curve.push_back(point);
        if (initial_total < 0.0) initial_total = point.total;
        if (point.total > train_cfg.divergence_factor * initial_total) {
          result.diverged = true;
          return false;
        }
        if (train_cfg.max_steps > 0 && step >= train_cfg.max_steps) {
          return false;
        }
      }
    }
    return true;
  };

  std::vector<const TrainSample*> stage1;
  for (const TrainSample& s : synthetic) stage1.push_back(&s);
  std::vector<const TrainSample*> stage2 = stage1;
  for (const TrainSample& s : real) stage2.push_back(&s);

  if (run_stage(stage1, schedule.stage1_epochs, false)) {
    run_stage(stage2, schedule.stage2_epochs, true);
  }
  result.steps = step;
  return result;
}

void save_loss_curve(const std::string& path,
                     const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss curve: " + path);
  out.precision(12);
  out << "step,total,repeat,peaky,reliab\n";
  for (const CurvePoint& p : curve) {
    out << p.step << ',' << p.total << ',' << p.repeatability << ','
        << p.peakiness << ',' << p.reliability << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanfeat::featnet
