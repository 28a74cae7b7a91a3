#include "model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hkd {

SequenceModel::SequenceModel(ModelDims dims, uint64_t init_seed) : dims_(dims) {
  if (dims.vocab < specials::count)
    throw validation_error("model vocab size must be >= " + std::to_string(specials::count));
  if (dims.embed < 1 || dims.hidden < 1)
    throw validation_error("model dims must be positive");
  build_layout();
  Rng rng(init_seed);
  for (long i = 0; i < theta_.size(); ++i) theta_[i] = rng.next_double() * 0.16 - 0.08;
}

void SequenceModel::build_layout() {
  const long V = dims_.vocab, E = dims_.embed, H = dims_.hidden;
  slices_.clear();
  long offset = 0;
  auto add = [&](const std::string& name, long rows, long cols) {
    slices_.push_back(ParamSlice{name, offset, rows, cols});
    slice_index_[name] = slices_.size() - 1;
    offset += rows * cols;
  };
  add("src_embed", E, V);
  add("tgt_embed", E, V);
  add("enc_wx", H, E);
  add("enc_wh", H, H);
  add("enc_b", H, 1);
  add("dec_wx", H, E);
  add("dec_wh", H, H);
  add("dec_b", H, 1);
  add("out_w", V, 2 * H);
  add("out_b", V, 1);
  theta_ = Eigen::VectorXd::Zero(offset);
}

const std::string& SequenceModel::slice_name_at(long i) const {
  for (const auto& s : slices_)
    if (i >= s.offset && i < s.offset + s.size()) return s.name;
  throw runtime_error("parameter index out of range: " + std::to_string(i));
}

SequenceModel::MatView SequenceModel::slice(Eigen::VectorXd& flat, const std::string& name) const {
  auto it = slice_index_.find(name);
  if (it == slice_index_.end()) throw runtime_error("unknown parameter slice '" + name + "'");
  const auto& s = slices_[it->second];
  return MatView(flat.data() + s.offset, s.rows, s.cols);
}

SequenceModel::ConstMatView SequenceModel::slice(const Eigen::VectorXd& flat,
                                                 const std::string& name) const {
  auto it = slice_index_.find(name);
  if (it == slice_index_.end()) throw runtime_error("unknown parameter slice '" + name + "'");
  const auto& s = slices_[it->second];
  return ConstMatView(flat.data() + s.offset, s.rows, s.cols);
}

long StepDistributions::total_tokens() const {
  long n = 0;
  for (const auto& g : gold) n += static_cast<long>(g.size());
  return n;
}

namespace {

void check_ids(const std::vector<int>& ids, int vocab, const char* side) {
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw validation_error(std::string(side) + " token id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(vocab));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd z = (logits.array() - logits.maxCoeff()).exp();
  return z / z.sum();
}

}  // namespace

StepDistributions forward(const SequenceModel& model, const Batch& batch) {
  return forward(model, batch, nullptr);
}

StepDistributions forward(const SequenceModel& model, const Batch& batch, ForwardCache* cache) {
  const auto& dims = model.dims();
  const long H = dims.hidden;

  auto src_embed = model.slice("src_embed");
  auto tgt_embed = model.slice("tgt_embed");
  auto enc_wx = model.slice("enc_wx");
  auto enc_wh = model.slice("enc_wh");
  auto enc_b = model.slice("enc_b");
  auto dec_wx = model.slice("dec_wx");
  auto dec_wh = model.slice("dec_wh");
  auto dec_b = model.slice("dec_b");
  auto out_w = model.slice("out_w");
  auto out_b = model.slice("out_b");

  StepDistributions out;
  if (cache) cache->sentences.clear();

  for (const auto& pair : batch.pairs) {
    check_ids(pair.source, dims.vocab, "source");
    check_ids(pair.target, dims.vocab, "target");
    if (pair.source.empty()) throw validation_error("forward: empty source sentence");

    const long S = static_cast<long>(pair.source.size());
    const long T = static_cast<long>(pair.target.size());

    Eigen::MatrixXd enc_h(H, S);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    for (long i = 0; i < S; ++i) {
      h = (enc_wx * src_embed.col(pair.source[static_cast<size_t>(i)]) + enc_wh * h +
           enc_b.col(0))
              .array()
              .tanh();
      enc_h.col(i) = h;
    }

    std::vector<int> dec_inputs(static_cast<size_t>(T));
    for (long t = 0; t < T; ++t)
      dec_inputs[static_cast<size_t>(t)] =
          t == 0 ? specials::bos : pair.target[static_cast<size_t>(t - 1)];

    Eigen::MatrixXd dec_s(H, T), attn(S, T), ctx(H, T), probs(dims.vocab, T);
    Eigen::VectorXd s = enc_h.col(S - 1);
    for (long t = 0; t < T; ++t) {
      s = (dec_wx * tgt_embed.col(dec_inputs[static_cast<size_t>(t)]) + dec_wh * s + dec_b.col(0))
              .array()
              .tanh();
      dec_s.col(t) = s;
      Eigen::VectorXd scores = enc_h.transpose() * s;
      Eigen::VectorXd a = softmax(scores);
      attn.col(t) = a;
      Eigen::VectorXd c = enc_h * a;
      ctx.col(t) = c;
      Eigen::VectorXd logits = out_w.leftCols(H) * s + out_w.rightCols(H) * c + out_b.col(0);
      probs.col(t) = softmax(logits);
    }

    out.probs.push_back(probs.transpose());
    out.gold.push_back(pair.target);
    if (cache)
      cache->sentences.push_back(
          ForwardCache::Sentence{pair.source, std::move(dec_inputs), std::move(enc_h),
                                 std::move(dec_s), std::move(attn), std::move(ctx),
                                 std::move(probs)});
  }
  return out;
}

Eigen::VectorXd backward(const SequenceModel& model, const ForwardCache& cache,
                         const std::vector<Eigen::MatrixXd>& dlogits) {
  const auto& dims = model.dims();
  const long H = dims.hidden;

  auto enc_wx = model.slice("enc_wx");
  auto enc_wh = model.slice("enc_wh");
  auto dec_wx = model.slice("dec_wx");
  auto dec_wh = model.slice("dec_wh");
  auto out_w = model.slice("out_w");
  auto src_embed = model.slice("src_embed");
  auto tgt_embed = model.slice("tgt_embed");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.param_count());
  auto g_src_embed = model.slice(grad, "src_embed");
  auto g_tgt_embed = model.slice(grad, "tgt_embed");
  auto g_enc_wx = model.slice(grad, "enc_wx");
  auto g_enc_wh = model.slice(grad, "enc_wh");
  auto g_enc_b = model.slice(grad, "enc_b");
  auto g_dec_wx = model.slice(grad, "dec_wx");
  auto g_dec_wh = model.slice(grad, "dec_wh");
  auto g_dec_b = model.slice(grad, "dec_b");
  auto g_out_w = model.slice(grad, "out_w");
  auto g_out_b = model.slice(grad, "out_b");

  if (dlogits.size() != cache.sentences.size())
    throw validation_error("backward: gradient/sentence count mismatch");

  for (size_t si = 0; si < cache.sentences.size(); ++si) {
    const auto& sent = cache.sentences[si];
    const long S = sent.enc_h.cols();
    const long T = sent.dec_s.cols();
    if (dlogits[si].rows() != T || dlogits[si].cols() != dims.vocab)
      throw validation_error("backward: per-step gradient has wrong shape");

    Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(H, S);
    Eigen::VectorXd ds_next = Eigen::VectorXd::Zero(H);

    for (long t = T - 1; t >= 0; --t) {
      Eigen::VectorXd dl = dlogits[si].row(t).transpose();
      const Eigen::VectorXd s = sent.dec_s.col(t);
      const Eigen::VectorXd c = sent.ctx.col(t);
      const Eigen::VectorXd a = sent.attn.col(t);

      g_out_b.col(0) += dl;
      g_out_w.leftCols(H) += dl * s.transpose();
      g_out_w.rightCols(H) += dl * c.transpose();
      Eigen::VectorXd ds = out_w.leftCols(H).transpose() * dl;
      Eigen::VectorXd dc = out_w.rightCols(H).transpose() * dl;

      // context and attention
      Eigen::VectorXd da = sent.enc_h.transpose() * dc;
      dH += dc * a.transpose();
      Eigen::VectorXd de = a.array() * (da.array() - a.dot(da));
      ds += sent.enc_h * de;
      dH += s * de.transpose();

      // decoder cell
      ds += ds_next;
      Eigen::VectorXd dpre = ds.array() * (1.0 - s.array().square());
      g_dec_b.col(0) += dpre;
      g_dec_wx += dpre * tgt_embed.col(sent.dec_inputs[static_cast<size_t>(t)]).transpose();
      const Eigen::VectorXd s_prev = t == 0 ? sent.enc_h.col(S - 1) : sent.dec_s.col(t - 1);
      g_dec_wh += dpre * s_prev.transpose();
      g_tgt_embed.col(sent.dec_inputs[static_cast<size_t>(t)]) += dec_wx.transpose() * dpre;
      ds_next = dec_wh.transpose() * dpre;
    }
    if (T > 0) dH.col(S - 1) += ds_next;  // decoder initial state is the last encoder state

    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
    for (long i = S - 1; i >= 0; --i) {
      const Eigen::VectorXd h = sent.enc_h.col(i);
      Eigen::VectorXd dh = dH.col(i) + dh_next;
      Eigen::VectorXd dpre = dh.array() * (1.0 - h.array().square());
      g_enc_b.col(0) += dpre;
      g_enc_wx += dpre * src_embed.col(sent.src[static_cast<size_t>(i)]).transpose();
      if (i > 0) g_enc_wh += dpre * sent.enc_h.col(i - 1).transpose();
      g_src_embed.col(sent.src[static_cast<size_t>(i)]) += enc_wx.transpose() * dpre;
      dh_next = enc_wh.transpose() * dpre;
    }
  }
  return grad;
}

namespace {

double nll_of(const StepDistributions& dists) {
  double loss = 0.0;
  for (size_t s = 0; s < dists.sentences(); ++s) {
    const auto& P = dists.probs[s];
    for (long t = 0; t < P.rows(); ++t)
      loss -= std::log(P(t, dists.gold[s][static_cast<size_t>(t)]));
  }
  return loss;
}

}  // namespace

double nll_value(const SequenceModel& model, const Batch& batch) {
  return nll_of(forward(model, batch));
}

LossGrad nll_loss_and_grad(const SequenceModel& model, const Batch& batch) {
  if (batch.pairs.empty()) throw validation_error("nll_loss_and_grad: empty batch");
  ForwardCache cache;
  StepDistributions dists = forward(model, batch, &cache);

  std::vector<Eigen::MatrixXd> dlogits;
  dlogits.reserve(dists.sentences());
  for (size_t s = 0; s < dists.sentences(); ++s) {
    Eigen::MatrixXd d = dists.probs[s];
    for (long t = 0; t < d.rows(); ++t) d(t, dists.gold[s][static_cast<size_t>(t)]) -= 1.0;
    dlogits.push_back(std::move(d));
  }
  return LossGrad{nll_of(dists), backward(model, cache, dlogits)};
}

double perplexity(const SequenceModel& model, const Batch& batch) {
  if (batch.pairs.empty()) throw validation_error("perplexity: empty batch");
  StepDistributions dists = forward(model, batch);
  return std::exp(nll_of(dists) / static_cast<double>(dists.total_tokens()));
}

std::vector<int> greedy_decode(const SequenceModel& model, const std::vector<int>& source,
                               size_t max_len) {
  if (max_len < 1) throw validation_error("greedy_decode: max_len must be >= 1");
  const auto& dims = model.dims();
  const long H = dims.hidden;
  check_ids(source, dims.vocab, "source");
  if (source.empty()) throw validation_error("greedy_decode: empty source");

  auto src_embed = model.slice("src_embed");
  auto tgt_embed = model.slice("tgt_embed");
  auto enc_wx = model.slice("enc_wx");
  auto enc_wh = model.slice("enc_wh");
  auto enc_b = model.slice("enc_b");
  auto dec_wx = model.slice("dec_wx");
  auto dec_wh = model.slice("dec_wh");
  auto dec_b = model.slice("dec_b");
  auto out_w = model.slice("out_w");
  auto out_b = model.slice("out_b");

  const long S = static_cast<long>(source.size());
  Eigen::MatrixXd enc_h(H, S);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  for (long i = 0; i < S; ++i) {
    h = (enc_wx * src_embed.col(source[static_cast<size_t>(i)]) + enc_wh * h + enc_b.col(0))
            .array()
            .tanh();
    enc_h.col(i) = h;
  }

  std::vector<int> out;
  Eigen::VectorXd s = enc_h.col(S - 1);
  int input = specials::bos;
  for (size_t step = 0; step < max_len; ++step) {
    s = (dec_wx * tgt_embed.col(input) + dec_wh * s + dec_b.col(0)).array().tanh();
    Eigen::VectorXd a = softmax(enc_h.transpose() * s);
    Eigen::VectorXd c = enc_h * a;
    Eigen::VectorXd logits = out_w.leftCols(H) * s + out_w.rightCols(H) * c + out_b.col(0);
    long best = 0;
    for (long v = 1; v < logits.size(); ++v)
      if (logits[v] > logits[best]) best = v;  // ties keep the lowest id
    if (best == specials::eos) break;
    out.push_back(static_cast<int>(best));
    input = static_cast<int>(best);
  }
  return out;
}

AdamState AdamState::for_model(const SequenceModel& model, double lr) {
  AdamState s;
  s.learning_rate = lr;
  s.m = Eigen::VectorXd::Zero(model.param_count());
  s.v = Eigen::VectorXd::Zero(model.param_count());
  return s;
}

void apply_update(SequenceModel& model, const Eigen::VectorXd& grad, AdamState& opt) {
  if (grad.size() != model.param_count() || opt.m.size() != grad.size())
    throw validation_error("apply_update: shape mismatch");
  for (long i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i]))
      throw runtime_error("non-finite gradient in parameter slice '" + model.slice_name_at(i) +
                          "' at flat index " + std::to_string(i));
  }
  opt.step += 1;
  const double b1 = opt.beta1, b2 = opt.beta2;
  opt.m = b1 * opt.m + (1.0 - b1) * grad;
  opt.v = b2 * opt.v.array() + (1.0 - b2) * grad.array().square();
  const double mc = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double vc = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  model.params().array() -=
      opt.learning_rate * (opt.m.array() / mc) / ((opt.v.array() / vc).sqrt() + opt.epsilon);
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'H', 'K', 'D', 'C', 'K', 'P', 'T', '1'};

void write_doubles(std::ostream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd read_doubles(std::istream& in, long n) {
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw io_error("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model,
                     const AdamState& opt, const std::array<uint64_t, 4>& rng_state,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["dims"] = {{"vocab", model.dims().vocab},
                    {"embed", model.dims().embed},
                    {"hidden", model.dims().hidden}};
  auto& slices = header["slices"] = nlohmann::json::array();
  for (const auto& s : model.slices())
    slices.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  header["opt"] = {{"learning_rate", opt.learning_rate}, {"beta1", opt.beta1},
                   {"beta2", opt.beta2},                 {"epsilon", opt.epsilon},
                   {"step", opt.step}};
  std::vector<std::string> rng_hex;
  for (uint64_t w : rng_state) {
    std::ostringstream ss;
    ss << std::hex << w;
    rng_hex.push_back(ss.str());
  }
  header["rng_state"] = rng_hex;
  header["extra"] = extra;

  std::ostringstream body;
  const std::string header_str = header.dump();
  body.write(kMagic, sizeof(kMagic));
  const uint64_t len = header_str.size();
  body.write(reinterpret_cast<const char*>(&len), sizeof(len));
  body.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  write_doubles(body, model.params());
  write_doubles(body, opt.m);
  write_doubles(body, opt.v);
  write_file_atomic(path, body.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw io_error("not a checkpoint file: " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw io_error("checkpoint truncated: " + path.string());
  const auto header = nlohmann::json::parse(header_str);

  ModelDims dims{header["dims"]["vocab"].get<int>(), header["dims"]["embed"].get<int>(),
                 header["dims"]["hidden"].get<int>()};
  Checkpoint ckpt;
  ckpt.model = SequenceModel(dims, 0);
  ckpt.model.params() = read_doubles(in, ckpt.model.param_count());

  ckpt.opt.learning_rate = header["opt"]["learning_rate"].get<double>();
  ckpt.opt.beta1 = header["opt"]["beta1"].get<double>();
  ckpt.opt.beta2 = header["opt"]["beta2"].get<double>();
  ckpt.opt.epsilon = header["opt"]["epsilon"].get<double>();
  ckpt.opt.step = header["opt"]["step"].get<long>();
  ckpt.opt.m = read_doubles(in, ckpt.model.param_count());
  ckpt.opt.v = read_doubles(in, ckpt.model.param_count());

  const auto rng_hex = header["rng_state"].get<std::vector<std::string>>();
  for (size_t i = 0; i < 4; ++i) ckpt.rng_state[i] = std::stoull(rng_hex.at(i), nullptr, 16);
  ckpt.extra = header["extra"];
  return ckpt;
}

}  // namespace hkd
