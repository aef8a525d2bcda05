#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "urw/corpus/synthetic.hpp"
#include "urw/decoding/beam_search.hpp"
#include "urw/model/batch.hpp"
#include "urw/model/rewriter.hpp"
#include "urw/numerics/ops.hpp"
#include "urw/training/adam.hpp"

using namespace urw;

namespace {

num::Tensor random_tensor(num::Shape shape, std::uint64_t seed, bool grad) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = u(rng);
  return num::Tensor::from_data(std::move(shape), std::move(v), grad);
}

struct Setup {
  corpus::Vocabulary vocab;
  std::vector<corpus::DialogueSample> samples;
  model::ModelConfig config;
  std::vector<model::TrainingExample> examples;
};

const Setup& setup() {
  static const Setup s = [] {
    corpus::SyntheticSpec spec;
    spec.num_samples = 64;
    Setup out;
    out.samples = corpus::generate_synthetic(spec);
    out.vocab = corpus::build_vocab(out.samples);
    out.config.d_model = 64;
    out.config.n_heads = 4;
    out.config.n_layers = 2;
    out.config.d_ff = 256;
    out.config.max_positions = 128;
    out.config.max_turns = 8;
    out.config.vocab_size = out.vocab.size();
    out.config.head = model::OutputHead::kPtrLambda;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      out.examples.push_back(model::make_example(out.vocab, out.samples[i], out.config, i));
    }
    return out;
  }();
  return s;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1, false), b = random_tensor({n, n}, 2, false);
  for (auto _ : state) {
    num::Tape tape(false);
    benchmark::DoNotOptimize(num::matmul(tape, a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// Scaled dot-product attention forward and backward, [B=32, m, d=64].
static void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto q = random_tensor({32, m, 64}, 3, true), k = random_tensor({32, m, 64}, 4, true),
             v = random_tensor({32, m, 64}, 5, true);
  const auto mask = num::Mask::all({32, m, m});
  for (auto _ : state) {
    num::Tape tape;
    const auto w = num::softmax_masked(tape, num::affine(tape, num::bmm(tape, q, k, true), 0.125), mask);
    const auto loss = num::sum_all(tape, num::bmm(tape, w, v));
    num::backward(loss, tape);
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(32)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
  const auto& s = setup();
  model::RewriterModel m(s.config, 1);
  training::AdamState adam(m.parameters());
  std::vector<const model::TrainingExample*> rows;
  for (std::size_t i = 0; i < 32; ++i) rows.push_back(&s.examples[i]);
  const auto batch = model::make_batch(rows, s.vocab.size());
  for (auto _ : state) {
    m.zero_grad();
    num::Tape tape;
    const auto loss = m.nll_loss(tape, batch);
    num::backward(loss, tape);
    training::clip_grad_norm(m.parameters(), 1.0);
    training::adam_step(m.parameters(), adam, 1e-3);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch.target_tokens()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_BeamSearch(benchmark::State& state) {
  const auto& s = setup();
  const model::RewriterModel m(s.config, 1);
  const auto input = model::encode_input(s.vocab, s.samples[0].history, s.samples[0].utterance, s.config);
  for (auto _ : state) {
    benchmark::DoNotOptimize(decoding::beam_search(m, input, static_cast<std::size_t>(state.range(0)), 16));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
