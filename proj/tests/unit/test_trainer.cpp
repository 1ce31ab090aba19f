#include <cmath>
#include <cstring>

#include "doctest.h"

#include "diffgap/adam.hpp"
#include "diffgap/contrastive.hpp"
#include "diffgap/corpus.hpp"
#include "diffgap/error.hpp"
#include "diffgap/trainer.hpp"
#include "../support/test_util.hpp"

using namespace diffgap;
using diffgap::testing::random_tensor;
using diffgap::testing::scratch_dir;

namespace {

TrainConfig tiny_train(std::uint64_t interval, std::size_t batch, std::size_t epochs) {
  TrainConfig c;
  c.batch_size = batch;
  c.epochs = epochs;
  c.interval = interval;
  c.time_embed_dim = 4;
  c.hidden_dim = 12;
  c.hidden_layers = 1;
  c.seed = 3;
  return c;
}

PairedCorpus tiny_corpus(std::size_t count, std::size_t dim_a = 6, std::size_t dim_v = 5) {
  ConceptSpec s;
  s.concept_dim = 3;
  s.dim_a = dim_a;
  s.dim_v = dim_v;
  s.count = count;
  s.seed = 8;
  return generate_corpus(s);
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
  ParamSet ps;
  ps.add("w", Tensor::vector({1.0, -2.0}));
  AdamState st = AdamState::for_params(ps);
  ps.zero_grad();
  adam_step(ps, st, AdamHyper{});
  CHECK(ps[0].value == Tensor::vector({1.0, -2.0}));
  CHECK(st.m[0] == Tensor(Shape{2}));
  CHECK(st.t == 1);

  // Existing moments shrink by beta1 and beta2 per zero-gradient step.
  st.m[0] = Tensor::vector({0.5, 0.5});
  st.v[0] = Tensor::vector({0.25, 0.25});
  adam_step(ps, st, AdamHyper{});
  CHECK(st.m[0][0] == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(st.v[0][0] == doctest::Approx(0.24975).epsilon(1e-15));
  CHECK(st.t == 2);
}

TEST_CASE("adam: first step with unit gradient moves by -lr") {
  ParamSet ps;
  ps.add("w", Tensor::vector({0.0, 3.0, -1.0}));
  AdamState st = AdamState::for_params(ps);
  ps[0].grad = Tensor::vector({1.0, 1.0, 1.0});
  adam_step(ps, st, AdamHyper{2e-4, 0.9, 0.999, 1e-8});
  const double expect = -2e-4 / (1.0 + 1e-8);
  CHECK(ps[0].value[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(ps[0].value[1] == doctest::Approx(3.0 + expect).epsilon(1e-15));
}

TEST_CASE("adam: constant gradient steps approach lr in magnitude") {
  ParamSet ps;
  ps.add("w", Tensor::vector({0.0}));
  AdamState st = AdamState::for_params(ps);
  double prev = 0.0, last_step = 0.0;
  for (int k = 0; k < 5000; ++k) {
    ps[0].grad = Tensor::vector({-0.3});
    adam_step(ps, st, AdamHyper{1e-3, 0.9, 0.999, 1e-8});
    last_step = ps[0].value[0] - prev;
    prev = ps[0].value[0];
  }
  CHECK(last_step > 0.0);
  CHECK(last_step == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam: shape mismatch is rejected") {
  ParamSet ps;
  ps.add("w", Tensor::vector({0.0, 1.0}));
  AdamState st = AdamState::for_params(ps);
  st.m[0] = Tensor::vector({0.0});
  CHECK_THROWS_AS(adam_step(ps, st, AdamHyper{}), ContractViolation);
}

TEST_CASE("toggle schedule for m=2") {
  // 12 items, batch 2: six iterations per epoch.
  const TrainResult r = train(tiny_corpus(12), tiny_train(2, 2, 1));
  REQUIRE(r.history.size() == 6);
  const Direction v2a = Direction::CondV_DenoiseA, a2v = Direction::CondA_DenoiseV;
  const Direction expect[] = {v2a, v2a, a2v, a2v, v2a, v2a};
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(r.history[j].iteration == j + 1);
    CHECK(r.history[j].direction == expect[j]);
  }
  CHECK(r.checkpoint.toggles == 3);
}

TEST_CASE("toggle count equals floor(J / m) over a property sweep") {
  const PairedCorpus corpus = tiny_corpus(17);
  for (std::size_t batch : {1u, 4u, 17u}) {
    for (std::size_t epochs : {1u, 3u}) {
      const std::size_t J = iterations_per_epoch(17, batch) * epochs;
      for (std::uint64_t m : {1ull, 2ull, 3ull, 5ull, 7ull, 16ull, 17ull, 51ull, 1000ull}) {
        const TrainResult r = train(corpus, tiny_train(m, batch, epochs));
        CHECK(r.checkpoint.iteration == J);
        CHECK(r.checkpoint.toggles == J / m);
        std::uint64_t switches = 0;
        for (std::size_t j = 1; j < r.history.size(); ++j) {
          switches += r.history[j].direction != r.history[j - 1].direction;
        }
        // The last toggle may fire after the final iteration.
        CHECK(switches + (J % m == 0 ? 1 : 0) == J / m);
        CHECK(r.checkpoint.direction ==
              ((J / m) % 2 == 0 ? Direction::CondV_DenoiseA : Direction::CondA_DenoiseV));
      }
    }
  }
}

TEST_CASE("m = never leaves the a2v denoiser at initialization") {
  const PairedCorpus corpus = tiny_corpus(30);
  TrainConfig cfg = tiny_train(kNeverToggle, 4, 3);
  const Checkpoint init = initial_checkpoint(corpus.dim_a(), corpus.dim_v(), cfg);
  const TrainResult r = train(corpus, cfg);
  CHECK(r.checkpoint.toggles == 0);
  for (std::size_t i = 0; i < init.a2v.denoiser.params().size(); ++i) {
    CHECK(r.checkpoint.a2v.denoiser.params()[i].value == init.a2v.denoiser.params()[i].value);
    CHECK_FALSE(r.checkpoint.v2a.denoiser.params()[i].value == init.v2a.denoiser.params()[i].value);
  }
  CHECK(r.checkpoint.a2v.adam.t == 0);
  // m >= total iterations behaves the same.
  const TrainResult big = train(corpus, tiny_train(24, 4, 3));
  CHECK(big.checkpoint.toggles == 1);  // fires after the last iteration only
  CHECK(big.checkpoint.a2v.adam.t == 0);
}

TEST_CASE("training is deterministic byte-for-byte") {
  const PairedCorpus corpus = tiny_corpus(20);
  const TrainConfig cfg = tiny_train(3, 4, 2);
  const TrainResult a = train(corpus, cfg), b = train(corpus, cfg);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  CHECK(loss_history_csv(a.history) == loss_history_csv(b.history));
  TrainConfig other = cfg;
  other.seed = 4;
  CHECK_FALSE(encode_checkpoint(train(corpus, other).checkpoint) == encode_checkpoint(a.checkpoint));
}

TEST_CASE("train_step: identical rows give the single-row gradient") {
  const NoiseSchedule sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(1);
  Denoiser d(DenoiserConfig{6, 4, 4, 8, 1, true}, rng);
  const Tensor z = random_tensor({1, 6}, rng), c = random_tensor({1, 4}, rng), e = random_tensor({1, 6}, rng);
  auto grads = [&](std::size_t rows) {
    Tensor zb(Shape{rows, 6}), cb(Shape{rows, 4}), eb(Shape{rows, 6});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(z.data().begin(), z.data().end(), zb.row(r).begin());
      std::copy(c.data().begin(), c.data().end(), cb.row(r).begin());
      std::copy(e.data().begin(), e.data().end(), eb.row(r).begin());
    }
    d.params().zero_grad();
    DiffusionLoss l = diffusion_loss_at(noise_model(d), zb, cb, sched, std::vector<std::size_t>(rows, 77), eb);
    l.tape.backward(l.loss);
    std::vector<Tensor> g;
    for (const Parameter& p : d.params()) g.push_back(p.grad);
    return std::pair{l.value(), g};
  };
  const auto [l1, g1] = grads(1);
  const auto [l5, g5] = grads(5);
  CHECK(l5 == doctest::Approx(l1).epsilon(1e-14));
  for (std::size_t i = 0; i < g1.size(); ++i) {
    for (std::size_t k = 0; k < g1[i].numel(); ++k) CHECK(g5[i][k] == doctest::Approx(g1[i][k]).epsilon(1e-12));
  }
}

TEST_CASE("train rejects bad input") {
  CHECK_THROWS_AS(train(PairedCorpus(), tiny_train(5, 4, 1)), ContractViolation);
  CHECK_THROWS_AS(train(tiny_corpus(8), tiny_train(0, 4, 1)), ContractViolation);
  CHECK_THROWS_AS(train(tiny_corpus(8), tiny_train(5, 0, 1)), ContractViolation);
  TrainConfig bad = tiny_train(5, 4, 1);
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train(tiny_corpus(8), bad), ContractViolation);
}

TEST_CASE("diverging training aborts with a diagnostic") {
  TrainConfig cfg = tiny_train(5, 4, 1);
  PairedCorpus corpus = tiny_corpus(8);
  Tensor a = corpus.a();
  a[0] = NAN;
  CHECK_THROWS(train(PairedCorpus(a, corpus.v()), cfg));
}

TEST_CASE("checkpoint round trip is byte-identical") {
  const PairedCorpus corpus = tiny_corpus(20);
  const TrainResult r = train(corpus, tiny_train(3, 4, 2));
  const auto bytes = encode_checkpoint(r.checkpoint);
  REQUIRE(bytes.size() > 12);
  CHECK(std::memcmp(bytes.data(), "DGCK", 4) == 0);
  CHECK(read_u32(bytes, 4) == 1);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.iteration == r.checkpoint.iteration);
  CHECK(back.direction == r.checkpoint.direction);
  CHECK(back.toggles == r.checkpoint.toggles);
  CHECK(back.train == r.checkpoint.train);
  for (std::size_t i = 0; i < back.v2a.denoiser.params().size(); ++i) {
    CHECK(back.v2a.denoiser.params()[i].value == r.checkpoint.v2a.denoiser.params()[i].value);
    CHECK(back.a2v.adam.m[i] == r.checkpoint.a2v.adam.m[i]);
  }
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(r.checkpoint, dir / "a.dgck");
  save_checkpoint(load_checkpoint(dir / "a.dgck"), dir / "b.dgck");
  CHECK(read_file_bytes(dir / "a.dgck") == read_file_bytes(dir / "b.dgck"));
}

TEST_CASE("corrupted checkpoints raise structured errors") {
  const auto bytes = encode_checkpoint(train(tiny_corpus(12), tiny_train(3, 4, 1)).checkpoint);
  auto section_of = [](const std::vector<std::uint8_t>& b) -> std::string {
    try {
      (void)decode_checkpoint(b);
    } catch (const FormatError& e) {
      return e.section();
    }
    return "";
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(section_of(bad_magic) == "magic");
  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK(section_of(bad_version) == "version");
  auto bad_json = bytes;
  bad_json[12] = '!';
  CHECK(section_of(bad_json) == "header");
  CHECK(section_of({bytes.begin(), bytes.begin() + 2}) == "magic");
  // Truncation inside the tensor records names the record being read.
  const std::string tail = section_of({bytes.begin(), bytes.end() - 9});
  CHECK(tail.find("tensor") != std::string::npos);
  const std::string mid = section_of({bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)});
  CHECK_FALSE(mid.empty());
  auto extra = bytes;
  extra.push_back(0);
  CHECK_FALSE(section_of(extra).empty());
  CHECK_THROWS_AS(load_checkpoint(scratch_dir("missing") / "none.dgck"), std::exception);
}

TEST_CASE("a checkpoint is rejected by data of other widths") {
  const Checkpoint ckpt = initial_checkpoint(512, 512, [] {
    TrainConfig c;
    c.hidden_dim = 8;
    c.time_embed_dim = 4;
    c.hidden_layers = 1;
    return c;
  }());
  CHECK_NOTHROW(check_compatible(ckpt, 512, 512));
  CHECK_THROWS_AS(check_compatible(ckpt, 256, 256), ContractViolation);
  CHECK_THROWS_AS(check_compatible(ckpt, 512, 256), ContractViolation);
}

TEST_CASE("DGC1 corpus round trip and corruption") {
  const PairedCorpus corpus = tiny_corpus(9);
  const auto bytes = encode_corpus(corpus);
  CHECK(bytes.size() == 16 + 4 * 9 * (6 + 5));
  CHECK(std::memcmp(bytes.data(), "DGC1", 4) == 0);
  CHECK(read_u32(bytes, 4) == 9);
  CHECK(read_u32(bytes, 8) == 6);
  CHECK(read_u32(bytes, 12) == 5);
  const PairedCorpus back = decode_corpus(bytes);
  CHECK(encode_corpus(back) == bytes);
  for (std::size_t i = 0; i < corpus.a().numel(); ++i) {
    CHECK(back.a()[i] == static_cast<double>(static_cast<float>(corpus.a()[i])));
  }
  const auto dir = scratch_dir("dgc1");
  save_corpus(corpus, dir / "a.dgc1");
  save_corpus(load_corpus(dir / "a.dgc1"), dir / "b.dgc1");
  CHECK(read_file_bytes(dir / "a.dgc1") == read_file_bytes(dir / "b.dgc1"));

  auto section_of = [](const std::vector<std::uint8_t>& b) -> std::string {
    try {
      (void)decode_corpus(b);
    } catch (const FormatError& e) {
      return e.section();
    }
    return "";
  };
  auto bad = bytes;
  bad[3] = '2';
  CHECK(section_of(bad) == "magic");
  CHECK(section_of({bytes.begin(), bytes.begin() + 10}) == "header");
  CHECK_FALSE(section_of({bytes.begin(), bytes.end() - 4}).empty());
  auto trailing = bytes;
  trailing.push_back(1);
  CHECK(section_of(trailing) == "trailer");
  auto nan = bytes;
  const float q = NAN;
  std::memcpy(nan.data() + 16, &q, 4);
  CHECK(section_of(nan) == "values");

  // Samples files carry modality A only.
  const PairedCorpus samples(corpus.a(), Tensor(Shape{9, 0}));
  CHECK(decode_corpus(encode_corpus(samples)).dim_v() == 0);
}

}  // TEST_SUITE
