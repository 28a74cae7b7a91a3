#include "model.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"

using namespace hkd;

namespace {

SequenceModel tiny_model(int vocab = 6, int embed = 4, int hidden = 5, uint64_t seed = 3) {
  return SequenceModel(ModelDims{vocab, embed, hidden}, seed);
}

}  // namespace

TEST_CASE("forward: rows are distributions and near-uniform at init") {
  auto model = tiny_model(8, 4, 6);
  Batch batch{{SentencePair{{4, 5, 6}, {5, 6, 7, 4}}, SentencePair{{7}, {4}}}};
  auto dists = forward(model, batch);
  REQUIRE(dists.sentences() == 2);
  CHECK(dists.probs[0].rows() == 4);
  CHECK(dists.probs[1].rows() == 1);  // single-token target: one row
  for (const auto& P : dists.probs) {
    for (long t = 0; t < P.rows(); ++t) {
      CHECK(P.row(t).sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(P.row(t).maxCoeff() / P.row(t).minCoeff() < 10.0);  // small-init logits
    }
  }
}

TEST_CASE("forward: batched equals per-sentence") {
  auto model = tiny_model(7, 4, 5, 11);
  Rng rng(21);
  Batch batch = oracles::random_batch(rng, 5, 7, 6, 5);
  auto batched = forward(model, batch);
  for (size_t s = 0; s < batch.pairs.size(); ++s) {
    Batch single{{batch.pairs[s]}};
    auto one = forward(model, single);
    CHECK((batched.probs[s] - one.probs[0]).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("forward: token id out of range is rejected") {
  auto model = tiny_model(6);
  Batch bad{{SentencePair{{4, 6}, {5}}}};
  CHECK_THROWS_AS(forward(model, bad), Error);
  Batch bad_tgt{{SentencePair{{4}, {-1}}}};
  CHECK_THROWS_AS(forward(model, bad_tgt), Error);
}

TEST_CASE("nll: forced one-hot output gives near-zero loss") {
  auto model = tiny_model(6, 4, 5);
  // bias the output layer hard toward token 4 and feed targets of token 4
  auto bias = model.slice(model.params(), "out_b");
  bias.setConstant(-30.0);
  bias(4, 0) = 30.0;
  Batch batch{{SentencePair{{5}, {4, 4, 4}}}};
  auto lg = nll_loss_and_grad(model, batch);
  CHECK(lg.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("nll: uniform model over |V|=4 at 3 steps costs 3 ln 4") {
  SequenceModel model(ModelDims{4, 3, 4}, 1);
  model.params().setZero();  // all-zero weights give exactly uniform rows
  Batch batch{{SentencePair{{0, 1}, {2, 3, 1}}}};
  auto lg = nll_loss_and_grad(model, batch);
  CHECK(lg.value == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("nll: analytic gradient matches central finite differences") {
  auto model = tiny_model(5, 4, 4, 17);
  Rng rng(33);
  Batch batch = oracles::random_batch(rng, 2, 5, 4, 3);
  auto lg = nll_loss_and_grad(model, batch);
  auto fd = oracles::finite_difference_grad(model, [&] { return nll_value(model, batch); });
  CHECK(oracles::grad_check_worst_rel(lg.grad, fd) < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto model = tiny_model();
  auto opt = AdamState::for_model(model, 0.1);
  Eigen::VectorXd before = model.params();
  apply_update(model, Eigen::VectorXd::Zero(model.param_count()), opt);
  CHECK((model.params() - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(opt.step == 1);
}

TEST_CASE("adam: one step matches the hand-computed update") {
  auto model = tiny_model();
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.3;
  auto opt = AdamState::for_model(model, lr);
  const double theta0 = model.params()[2];
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.param_count());
  grad[2] = g;
  apply_update(model, grad, opt);
  // first step: m = (1-b1) g, v = (1-b2) g^2, bias correction restores g and g^2
  const double m_hat = (1 - b1) * g / (1 - b1);
  const double v_hat = (1 - b2) * g * g / (1 - b2);
  const double expected = theta0 - lr * m_hat / (std::sqrt(v_hat) + eps);
  CHECK(model.params()[2] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adam: identical calls from identical state give identical results") {
  auto a = tiny_model(6, 4, 5, 5);
  auto b = tiny_model(6, 4, 5, 5);
  auto opt_a = AdamState::for_model(a, 0.05);
  auto opt_b = AdamState::for_model(b, 0.05);
  Rng rng(8);
  Eigen::VectorXd grad(a.param_count());
  for (long i = 0; i < grad.size(); ++i) grad[i] = rng.next_double() - 0.5;
  apply_update(a, grad, opt_a);
  apply_update(b, grad, opt_b);
  CHECK(a.params() == b.params());
}

TEST_CASE("adam: non-finite gradient names the parameter slice") {
  auto model = tiny_model();
  auto opt = AdamState::for_model(model, 0.1);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.param_count());
  // poison an index inside the encoder recurrence slice
  long offset = 0;
  for (const auto& s : model.slices())
    if (s.name == "enc_wh") offset = s.offset;
  grad[offset + 1] = std::numeric_limits<double>::quiet_NaN();
  try {
    apply_update(model, grad, opt);
    FAIL("expected abort");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("enc_wh") != std::string::npos);
  }
}

TEST_CASE("perplexity: perfect model 1.0, uniform model |V|") {
  SequenceModel uniform(ModelDims{4, 3, 4}, 1);
  uniform.params().setZero();
  Batch batch{{SentencePair{{0, 1}, {2, 3}}}};
  CHECK(perplexity(uniform, batch) == doctest::Approx(4.0).epsilon(1e-12));

  auto forced = tiny_model(6, 4, 5);
  auto bias = forced.slice(forced.params(), "out_b");
  bias.setConstant(-30.0);
  bias(4, 0) = 30.0;
  Batch fours{{SentencePair{{5}, {4, 4}}}};
  CHECK(perplexity(forced, fours) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("perplexity agrees with nll_loss_and_grad") {
  auto model = tiny_model(7, 4, 5, 23);
  Rng rng(4);
  Batch batch = oracles::random_batch(rng, 3, 7, 5, 4);
  long tokens = 0;
  for (const auto& p : batch.pairs) tokens += static_cast<long>(p.target.size());
  const double nll = nll_loss_and_grad(model, batch).value;
  CHECK(perplexity(model, batch) ==
        doctest::Approx(std::exp(nll / static_cast<double>(tokens))).epsilon(1e-9));
}

TEST_CASE("greedy_decode: immediate end token and max_len cap") {
  auto model = tiny_model(6, 4, 5);
  auto bias = model.slice(model.params(), "out_b");
  bias.setConstant(-30.0);
  bias(specials::eos, 0) = 30.0;
  CHECK(greedy_decode(model, {4, 5}, 10).empty());

  bias.setConstant(-30.0);
  bias(4, 0) = 30.0;  // never emits </s>
  CHECK(greedy_decode(model, {4, 5}, 1).size() == 1);
  CHECK(greedy_decode(model, {4, 5}, 7).size() == 7);
}

TEST_CASE("training smoke: cipher task reaches low perplexity and decodes") {
  // single 0-noise language; 500 updates must push dev perplexity under 1.5
  SyntheticFamilySpec spec;
  spec.n_families = 1;
  spec.langs_per_family = 1;
  spec.low_resource_per_family = 1;
  spec.noise_rate = 0.0;
  spec.train_sentences = 64;
  spec.low_resource_train_sentences = 64;
  spec.dev_sentences = 16;
  spec.test_sentences = 4;
  spec.min_sentence_words = 2;
  spec.max_sentence_words = 5;
  auto data = generate_synthetic(spec, 40);
  const LanguageId lang{"a1"};
  const auto& train = data.corpora.at(Split::train).at(lang);
  const auto& dev = data.corpora.at(Split::dev).at(lang);

  SequenceModel model(ModelDims{data.vocab.size(), 16, 32}, 99);
  auto opt = AdamState::for_model(model, 5e-3);
  Rng rng(12);
  auto with_eos = [](const ParallelCorpus& c) {
    Batch b{c.pairs};
    for (auto& p : b.pairs) p.target.push_back(specials::eos);
    return b;
  };
  for (int step = 0; step < 500; ++step) {
    auto batches = make_minibatches(train, 16, rng.next_seed());
    bool done = false;
    for (const auto& raw : batches) {
      Batch batch{raw.pairs};
      for (auto& p : batch.pairs) p.target.push_back(specials::eos);
      auto lg = nll_loss_and_grad(model, batch);
      long tokens = 0;
      for (const auto& p : batch.pairs) tokens += static_cast<long>(p.target.size());
      Eigen::VectorXd grad = lg.grad / static_cast<double>(tokens);
      apply_update(model, grad, opt);
      if (opt.step >= 500) {
        done = true;
        break;
      }
    }
    if (done) break;
  }

  CHECK(perplexity(model, with_eos(dev)) < 1.5);

  int exact = 0;
  const int n_eval = 20;
  for (int i = 0; i < n_eval; ++i) {
    const auto& pair = train.pairs[static_cast<size_t>(i)];
    if (greedy_decode(model, pair.source, 80) == pair.target) ++exact;
  }
  CHECK(exact >= 18);  // >= 90% exact match on the train subset
}

TEST_CASE("checkpoint: bit-exact round trip") {
  auto model = tiny_model(9, 5, 7, 31);
  auto opt = AdamState::for_model(model, 0.004);
  Rng rng(2);
  Eigen::VectorXd grad(model.param_count());
  for (long i = 0; i < grad.size(); ++i) grad[i] = rng.next_double() - 0.5;
  apply_update(model, grad, opt);

  nlohmann::json extra = {{"model_id", "unit"}, {"epoch", 3}};
  auto path = std::filesystem::temp_directory_path() / "hkd_ckpt_roundtrip.ckpt";
  save_checkpoint(path, model, opt, rng.state(), extra);
  auto loaded = load_checkpoint(path);

  CHECK(loaded.model.dims() == model.dims());
  CHECK(loaded.model.params() == model.params());
  CHECK(loaded.opt.m == opt.m);
  CHECK(loaded.opt.v == opt.v);
  CHECK(loaded.opt.step == opt.step);
  CHECK(loaded.opt.learning_rate == opt.learning_rate);
  CHECK(loaded.rng_state == rng.state());
  CHECK(loaded.extra.at("model_id") == "unit");

  // saving the loaded state reproduces the file byte for byte
  auto path2 = std::filesystem::temp_directory_path() / "hkd_ckpt_roundtrip2.ckpt";
  save_checkpoint(path2, loaded.model, loaded.opt, loaded.rng_state, loaded.extra);
  CHECK(read_file(path) == read_file(path2));
}
