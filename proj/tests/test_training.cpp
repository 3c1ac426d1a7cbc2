#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "motionforge/errors.hpp"
#include "motionforge/pipeline.hpp"
#include "motionforge/training.hpp"

using namespace motionforge;

namespace {

struct Toy {
  Schedule schedule = build_schedule();
  PerceptualProxy proxy;
  LossConfig weights;
  double gamma = 8.0;
  std::vector<TrainingExample> data;

  Toy(int count, int size, double magnitude, std::uint64_t seed) {
    for (int i = 0; i < count; ++i) {
      const SampleRecord r = gen_sir_sample(seed + static_cast<std::uint64_t>(i), size, size, magnitude, gamma);
      data.push_back(make_training_example(r, gamma, 2));
    }
  }
  LossContext context() const { return LossContext{schedule, proxy, weights, gamma, 2}; }
};

DenoiserModel toy_model(int hidden = 8) {
  DenoiserConfig cfg;
  cfg.conditions = 2;
  cfg.hidden = hidden;
  return DenoiserModel::create(cfg, 17);
}

// Mean l_diff over a fixed grid of timesteps and noises.
double probe_diff(const DenoiserModel& m, const Toy& toy) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < toy.data.size(); ++i)
    for (int t : {50, 300, 600, 900, 1000}) {
      const auto noise = gaussian_tensor(toy.data[i].flow_latent.shape(), 999, i * 1000 + t);
      sum += evaluate_example(m, toy.data[i], t, noise, toy.context()).diff;
      ++n;
    }
  return sum / n;
}

std::vector<double> params_of(const DenoiserModel& m) { return {m.parameters().begin(), m.parameters().end()}; }

}  // namespace

TEST_CASE("zero learning rate leaves the weights unchanged") {
  const Toy toy(4, 8, 1.0, 1);
  DenoiserModel m = toy_model();
  const auto before = params_of(m);
  TrainOptions opt;
  opt.epochs = 2;
  opt.learning_rate = 0.0;
  TrainState st;
  const auto hist = train(m, toy.data, toy.context(), opt, st);
  CHECK(hist.size() == 2);
  CHECK(params_of(m) == before);
  CHECK(st.step == 2);
}

TEST_CASE("same seed gives the same curve, any thread count") {
  const Toy toy(6, 8, 1.0, 2);
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 3;
  opt.learning_rate = 1e-3;
  opt.seed = 9;
  auto run = [&](int threads) {
    DenoiserModel m = toy_model();
    TrainOptions o = opt;
    o.threads = threads;
    TrainState st;
    const auto hist = train(m, toy.data, toy.context(), o, st);
    std::vector<double> curve;
    for (const auto& r : hist) curve.push_back(r.total);
    return std::make_pair(curve, params_of(m));
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(3);
  CHECK(a.first.size() == 6);
  CHECK(a == b);
  CHECK(a == c);

  TrainOptions other = opt;
  other.seed = 10;
  DenoiserModel m = toy_model();
  TrainState st;
  const auto hist = train(m, toy.data, toy.context(), other, st);
  CHECK(hist.front().total != a.first.front());
}

TEST_CASE("resuming continues the same trajectory") {
  const Toy toy(5, 8, 1.0, 3);
  TrainOptions opt;
  opt.epochs = 4;
  opt.batch_size = 2;
  opt.seed = 4;

  DenoiserModel full = toy_model();
  TrainState full_state;
  const auto full_hist = train(full, toy.data, toy.context(), opt, full_state);

  DenoiserModel part = toy_model();
  TrainState part_state;
  TrainOptions half = opt;
  half.epochs = 2;
  auto hist = train(part, toy.data, toy.context(), half, part_state);
  const auto rest = train(part, toy.data, toy.context(), opt, part_state);
  hist.insert(hist.end(), rest.begin(), rest.end());

  REQUIRE(hist.size() == full_hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    CHECK(hist[i].step == full_hist[i].step);
    CHECK(hist[i].total == full_hist[i].total);
  }
  CHECK(params_of(part) == params_of(full));
  CHECK(part_state.velocity == full_state.velocity);
}

TEST_CASE("parallel and serial gradients agree") {
  const Toy toy(4, 8, 1.0, 4);
  const DenoiserModel m = toy_model();
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < toy.data.size(); ++i)
    batch.push_back({&toy.data[i], 100 + 200 * static_cast<int>(i), gaussian_tensor(toy.data[i].flow_latent.shape(), 3, i)});
  const auto serial = gradients(m, batch, toy.context(), 1);
  const auto parallel = gradients(m, batch, toy.context(), 4);
  CHECK(serial.total == parallel.total);
  for (std::size_t k = 0; k < serial.grad.size(); ++k) CHECK(std::abs(serial.grad[k] - parallel.grad[k]) <= 1e-10);

  // Batch mean of the per-item gradients.
  std::vector<double> manual(serial.grad.size(), 0.0);
  for (const auto& item : batch) evaluate_example(m, *item.example, item.t, item.noise, toy.context(), manual, 0.25);
  for (std::size_t k = 0; k < manual.size(); ++k) CHECK(manual[k] == doctest::Approx(serial.grad[k]).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("training errors") {
  const Toy toy(2, 8, 1.0, 5);
  DenoiserModel m = toy_model();
  TrainState st;
  CHECK_THROWS_AS(train(m, {}, toy.context(), TrainOptions{}, st), EmptyDataset);
  TrainOptions bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(m, toy.data, toy.context(), bad, st), InvalidParameter);

  m.block("conv_in.weight")[0] = std::nan("");
  CHECK_THROWS_AS(train(m, toy.data, toy.context(), TrainOptions{}, st), DivergenceError);
}

TEST_CASE("16x16 toy converges within 500 steps") {
  Toy toy(8, 16, 1.5, 6);
  DenoiserModel m = toy_model(8);
  const double initial = probe_diff(m, toy);
  TrainOptions opt;
  opt.epochs = 250;  // 2 steps per epoch
  opt.batch_size = 4;
  opt.learning_rate = 1e-2;
  opt.seed = 1;
  TrainState st;
  train(m, toy.data, toy.context(), opt, st);
  CHECK(st.step == 500);
  const double final_diff = probe_diff(m, toy);
  INFO("initial " << initial << " final " << final_diff);
  CHECK(final_diff < 0.3 * initial);
}

TEST_CASE("one-step sampling from an identity-trained 8x8 toy") {
  // Zero-magnitude samples: every target flow is zero.
  Toy toy(4, 8, 0.0, 7);
  DenoiserModel m = toy_model(8);
  TrainOptions opt;
  opt.epochs = 400;
  opt.batch_size = 4;
  opt.learning_rate = 1e-2;
  opt.seed = 2;
  TrainState st;
  train(m, toy.data, toy.context(), opt, st);

  const MotionModel model{m, toy.schedule, toy.gamma, 2, Task::sir};
  const SampleRecord rec = gen_sir_sample(7, 8, 8, 0.0, toy.gamma);
  const LatentTensor target = encode_flow(rec.flow_gt, toy.gamma, 2);
  const auto predictor = [&](const Tensor3& in, int t) { return m.forward(in, t); };
  const LatentTensor z0 = sample(predictor, encode_conditions(rec, 2), target.tensor().shape(), 1, 5, toy.schedule);
  const double err = rms_distance(z0.tensor(), target.tensor());
  INFO("rms " << err);
  CHECK(err < 0.05);
  CHECK(sample(predictor, encode_conditions(rec, 2), target.tensor().shape(), 1, 5, toy.schedule) == z0);
}
