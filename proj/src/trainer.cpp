#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace hkd {

void DataStore::put(ParallelCorpus corpus) {
  auto lang = corpus.lang;
  data_[corpus.split].insert_or_assign(lang, std::move(corpus));
}

const ParallelCorpus& DataStore::get(const LanguageId& lang, Split split) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(AccessRecord{stage_, lang, split});
  }
  auto split_it = data_.find(split);
  if (split_it == data_.end() || !split_it->second.count(lang))
    throw validation_error(std::string("no ") + split_name(split) + " corpus for language " +
                           lang.code);
  return split_it->second.at(lang);
}

bool DataStore::has(const LanguageId& lang, Split split) const {
  auto it = data_.find(split);
  return it != data_.end() && it->second.count(lang) > 0;
}

std::vector<LanguageId> DataStore::languages() const {
  std::vector<LanguageId> out;
  auto it = data_.find(Split::train);
  if (it == data_.end()) return out;
  for (const auto& [lang, _] : it->second) out.push_back(lang);
  return out;
}

std::vector<AccessRecord> DataStore::access_log() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return log_;
}

Batch prepare_batch(const Batch& raw, int tag_id) {
  Batch out;
  out.pairs.reserve(raw.pairs.size());
  for (const auto& p : raw.pairs) {
    SentencePair prepared;
    prepared.source.reserve(p.source.size() + 1);
    prepared.source.push_back(tag_id);
    prepared.source.insert(prepared.source.end(), p.source.begin(), p.source.end());
    prepared.target = p.target;
    prepared.target.push_back(specials::eos);
    out.pairs.push_back(std::move(prepared));
  }
  return out;
}

long gold_token_count(const Batch& prepared) {
  long n = 0;
  for (const auto& p : prepared.pairs) n += static_cast<long>(p.target.size());
  return n;
}

double dev_accuracy(const SequenceModel& model, const ParallelCorpus& dev, int tag_id,
                    bool token_accuracy, size_t max_decode_len) {
  if (dev.pairs.empty()) throw validation_error("dev_accuracy: empty dev corpus");
  if (token_accuracy) {
    Batch prepared = prepare_batch(Batch{dev.pairs}, tag_id);
    StepDistributions dists = forward(model, prepared);
    long correct = 0, total = 0;
    for (size_t s = 0; s < dists.sentences(); ++s) {
      const auto& P = dists.probs[s];
      for (long t = 0; t < P.rows(); ++t) {
        long best = 0;
        for (long v = 1; v < P.cols(); ++v)
          if (P(t, v) > P(t, best)) best = v;
        correct += best == dists.gold[s][static_cast<size_t>(t)] ? 1 : 0;
        ++total;
      }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  }

  std::vector<std::vector<int>> hyps, refs;
  hyps.reserve(dev.pairs.size());
  for (const auto& p : dev.pairs) {
    std::vector<int> src;
    src.push_back(tag_id);
    src.insert(src.end(), p.source.begin(), p.source.end());
    hyps.push_back(greedy_decode(model, src, max_decode_len));
    refs.push_back(p.target);
  }
  return bleu(hyps, refs).score;
}

namespace {

nlohmann::json flags_to_json(const FlagState& flags) {
  nlohmann::json j;
  auto& f = j["flags"] = nlohmann::json::object();
  for (const auto& [lang, on] : flags.flags) f[lang.code] = on;
  auto& h = j["history"] = nlohmann::json::array();
  for (const auto& flip : flags.history)
    h.push_back({flip.epoch, flip.lang.code, flip.from, flip.to});
  return j;
}

FlagState flags_from_json(const nlohmann::json& j) {
  FlagState flags;
  for (const auto& [code, on] : j.at("flags").items()) flags.flags[LanguageId{code}] = on.get<bool>();
  for (const auto& flip : j.at("history"))
    flags.history.push_back(FlagState::Flip{flip[0].get<int>(), LanguageId{flip[1].get<std::string>()},
                                            flip[2].get<bool>(), flip[3].get<bool>()});
  return flags;
}

nlohmann::json rows_to_json(const std::vector<FlagLogRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({r.model_id, r.epoch, r.lang.code, r.student_acc, r.teacher_acc, r.flag});
  return j;
}

std::vector<FlagLogRow> flag_rows_from_json(const nlohmann::json& j) {
  std::vector<FlagLogRow> rows;
  for (const auto& r : j)
    rows.push_back(FlagLogRow{r[0].get<std::string>(), r[1].get<int>(),
                              LanguageId{r[2].get<std::string>()}, r[3].get<double>(),
                              r[4].get<double>(), r[5].get<bool>()});
  return rows;
}

nlohmann::json rows_to_json(const std::vector<AlphaLogRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) j.push_back({r.step, r.lang.code, r.ta, r.alpha, r.perplexity});
  return j;
}

std::vector<AlphaLogRow> alpha_rows_from_json(const nlohmann::json& j) {
  std::vector<AlphaLogRow> rows;
  for (const auto& r : j)
    rows.push_back(AlphaLogRow{r[0].get<long>(), LanguageId{r[1].get<std::string>()},
                               r[2].get<std::string>(), r[3].get<double>(), r[4].get<double>()});
  return rows;
}

struct RunState {
  SequenceModel model;
  AdamState opt;
  Rng rng{0};
  FlagState flags;
  long global_step = 0;
  int epochs_done = 0;
  std::vector<FlagLogRow> flag_rows;
  std::vector<AlphaLogRow> alpha_rows;
};

void save_run_checkpoint(const TrainSpec& spec, const RunState& st, bool completed) {
  if (spec.ckpt_path.empty()) return;
  nlohmann::json extra;
  extra["model_id"] = spec.model_id;
  extra["epoch"] = st.epochs_done;
  extra["completed"] = completed;
  extra["global_step"] = st.global_step;
  extra["flag_state"] = flags_to_json(st.flags);
  extra["flag_rows"] = rows_to_json(st.flag_rows);
  extra["alpha_rows"] = rows_to_json(st.alpha_rows);
  save_checkpoint(spec.ckpt_path, st.model, st.opt, st.rng.state(), extra);
}

}  // namespace

TrainResult result_from_checkpoint(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  TrainResult res;
  res.model = std::move(ckpt.model);
  res.opt = std::move(ckpt.opt);
  res.flags = flags_from_json(ckpt.extra.at("flag_state"));
  res.global_step = ckpt.extra.at("global_step").get<long>();
  res.completed = ckpt.extra.at("completed").get<bool>();
  res.flag_rows = flag_rows_from_json(ckpt.extra.at("flag_rows"));
  res.alpha_rows = alpha_rows_from_json(ckpt.extra.at("alpha_rows"));
  return res;
}

TrainResult run_training(const TrainContext& ctx, const TrainSpec& spec) {
  if (!ctx.vocab) throw runtime_error("run_training: vocabulary missing");
  if (spec.languages.empty()) throw validation_error(spec.model_id + ": no languages to train on");
  if ((spec.teachers || spec.tas) && !spec.plan)
    throw validation_error(spec.model_id + ": distillation requires a plan");
  if (spec.tas && !spec.effective)
    throw validation_error(spec.model_id + ": adaptive training requires the effective-cluster index");
  if (spec.plan) spec.plan->validate();
  for (const auto& lang : spec.languages) {
    auto it = spec.corpora.find(lang);
    if (it == spec.corpora.end())
      throw validation_error(spec.model_id + ": no training corpus for " + lang.code);
    if (it->second.split != Split::train)
      throw validation_error(spec.model_id + ": corpus for " + lang.code + " is not a train split");
    if (spec.teachers && !spec.teachers->count(lang))
      throw config_error(spec.model_id + ": missing teacher for " + lang.code);
  }

  RunState st;
  st.rng = Rng(spec.seed);
  st.model = SequenceModel(ctx.dims, st.rng.next_seed());
  st.opt = AdamState::for_model(st.model, ctx.learning_rate);
  st.opt.beta1 = ctx.beta1;
  st.opt.beta2 = ctx.beta2;
  st.opt.epsilon = ctx.epsilon;
  for (const auto& lang : spec.languages) st.flags.flags[lang] = true;

  if (spec.resume && !spec.ckpt_path.empty() && std::filesystem::exists(spec.ckpt_path)) {
    Checkpoint ckpt = load_checkpoint(spec.ckpt_path);
    if (ckpt.extra.at("model_id").get<std::string>() != spec.model_id)
      throw io_error("checkpoint " + spec.ckpt_path.string() + " belongs to model '" +
                     ckpt.extra.at("model_id").get<std::string>() + "', expected '" +
                     spec.model_id + "'");
    if (ckpt.extra.at("completed").get<bool>()) return result_from_checkpoint(spec.ckpt_path);
    st.model = std::move(ckpt.model);
    st.opt = std::move(ckpt.opt);
    st.rng.set_state(ckpt.rng_state);
    st.flags = flags_from_json(ckpt.extra.at("flag_state"));
    st.global_step = ckpt.extra.at("global_step").get<long>();
    st.epochs_done = ckpt.extra.at("epoch").get<int>();
    st.flag_rows = flag_rows_from_json(ckpt.extra.at("flag_rows"));
    st.alpha_rows = alpha_rows_from_json(ckpt.extra.at("alpha_rows"));
  }

  // teacher dev accuracies are fixed; computed once at the first flag check
  std::map<LanguageId, double> teacher_acc;

  // effective teacher-assistants per language, resolved up front
  std::map<LanguageId, std::vector<std::pair<std::string, const SequenceModel*>>> ta_for_lang;
  if (spec.tas) {
    for (const auto& lang : spec.languages) {
      auto it = spec.effective->find(lang);
      if (it == spec.effective->end() || it->second.empty())
        throw config_error(spec.model_id + ": no effective clusters for " + lang.code);
      for (const auto& ec : it->second) {
        auto ta_it = spec.tas->find(ec.label());
        if (ta_it == spec.tas->end())
          throw config_error(spec.model_id + ": missing teacher-assistant " + ec.label());
        ta_for_lang[lang].emplace_back(ec.type_id + ":" + std::to_string(ec.cluster),
                                       &ta_it->second);
      }
    }
  }

  for (int epoch = st.epochs_done + 1; epoch <= spec.epochs; ++epoch) {
    auto order = spec.languages;
    st.rng.shuffle(order);
    for (const auto& lang : order) {
      const auto& corpus = spec.corpora.at(lang);
      const int tag = ctx.vocab->tag_id(lang);
      auto batches = make_minibatches(corpus, static_cast<size_t>(ctx.batch_size),
                                      st.rng.next_seed());
      for (const auto& raw : batches) {
        Batch batch = prepare_batch(raw, tag);
        LossGrad lg;
        LossParts parts;
        bool kd_active = false;

        if (spec.tas) {
          const auto& tas = ta_for_lang.at(lang);
          std::vector<const SequenceModel*> models;
          models.reserve(tas.size());
          for (const auto& [_, m] : tas) models.push_back(m);
          TeacherWeights w = contribution_weights(models, batch);
          if (spec.plan->exclude_worst_ta && models.size() > 1) {
            long worst = 0;
            w.delta.minCoeff(&worst);
            w.alpha[worst] = 0.0;
            w.alpha /= w.alpha.sum();
          }
          const double lambda2 = anneal_lambda2(st.global_step, spec.plan->lambda2);
          lg = adaptive_total_loss(st.model, models, batch, w.alpha, spec.plan->lambda1, lambda2,
                                   &parts);
          for (size_t c = 0; c < tas.size(); ++c)
            st.alpha_rows.push_back(AlphaLogRow{st.global_step, lang, tas[c].first,
                                                w.alpha[static_cast<long>(c)],
                                                -w.delta[static_cast<long>(c)]});
          kd_active = true;
        } else if (spec.teachers && st.flags.flags.at(lang)) {
          lg = selective_total_loss(st.model, spec.teachers->at(lang), batch, spec.plan->lambda,
                                    &parts);
          kd_active = true;
        } else {
          lg = nll_loss_and_grad(st.model, batch);
          parts = LossParts{lg.value, 0.0};
        }

        if (!std::isfinite(lg.value))
          throw runtime_error(spec.model_id + ": training diverged on language " + lang.code +
                              " at step " + std::to_string(st.global_step));
        Eigen::VectorXd grad = lg.grad / static_cast<double>(gold_token_count(batch));
        apply_update(st.model, grad, st.opt);
        if (ctx.hooks.on_batch)
          ctx.hooks.on_batch(
              BatchLossInfo{spec.model_id, epoch, st.global_step, lang, kd_active, parts, lg.value});
        ++st.global_step;
      }
    }

    if (spec.teachers && spec.check_flags && epoch % spec.plan->check_every == 0) {
      for (const auto& lang : spec.languages) {
        const auto& dev = ctx.data->get(lang, Split::dev);
        if (dev.split != Split::dev)
          throw validation_error(spec.model_id + ": flag check needs the dev split");
        if (!teacher_acc.count(lang))
          teacher_acc[lang] = dev_accuracy(spec.teachers->at(lang), dev, ctx.vocab->tag_id(lang),
                                           spec.plan->use_token_accuracy, ctx.max_decode_len);
        const double student = dev_accuracy(st.model, dev, ctx.vocab->tag_id(lang),
                                            spec.plan->use_token_accuracy, ctx.max_decode_len);
        const bool next = distillation_flag(student, teacher_acc[lang], spec.plan->threshold);
        bool& current = st.flags.flags.at(lang);
        if (next != current)
          st.flags.history.push_back(FlagState::Flip{epoch, lang, current, next});
        current = next;
        st.flag_rows.push_back(
            FlagLogRow{spec.model_id, epoch, lang, student, teacher_acc[lang], next});
      }
    }

    st.epochs_done = epoch;
    save_run_checkpoint(spec, st, /*completed=*/false);
    if (ctx.hooks.stop_after_epoch && ctx.hooks.stop_after_epoch(epoch)) {
      TrainResult res;
      res.model = std::move(st.model);
      res.opt = std::move(st.opt);
      res.flags = std::move(st.flags);
      res.global_step = st.global_step;
      res.completed = false;
      res.flag_rows = std::move(st.flag_rows);
      res.alpha_rows = std::move(st.alpha_rows);
      return res;
    }
  }

  save_run_checkpoint(spec, st, /*completed=*/true);
  TrainResult res;
  res.model = std::move(st.model);
  res.opt = std::move(st.opt);
  res.flags = std::move(st.flags);
  res.global_step = st.global_step;
  res.completed = true;
  res.flag_rows = std::move(st.flag_rows);
  res.alpha_rows = std::move(st.alpha_rows);
  return res;
}

namespace {

std::string fmt_num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

}  // namespace

void write_alpha_csv(const std::filesystem::path& path, const std::vector<AlphaLogRow>& rows) {
  std::ostringstream out;
  out << "step,lang,type_id:cluster,alpha,perplexity\n";
  for (const auto& r : rows)
    out << r.step << ',' << r.lang.code << ',' << r.ta << ',' << fmt_num(r.alpha) << ','
        << fmt_num(r.perplexity) << '\n';
  write_file_atomic(path, out.str());
}

std::vector<AlphaLogRow> read_alpha_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "step,lang,type_id:cluster,alpha,perplexity")
    throw validation_error("alpha csv " + path.string() + ": bad header");
  std::vector<AlphaLogRow> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::istringstream ss(lines[i]);
    std::string step, lang, ta, alpha, ppl;
    std::getline(ss, step, ',');
    std::getline(ss, lang, ',');
    std::getline(ss, ta, ',');
    std::getline(ss, alpha, ',');
    std::getline(ss, ppl, ',');
    rows.push_back(AlphaLogRow{std::stol(step), LanguageId{lang}, ta, std::stod(alpha),
                               std::stod(ppl)});
  }
  return rows;
}

void write_flags_csv(const std::filesystem::path& path, const std::vector<FlagLogRow>& rows) {
  std::ostringstream out;
  out << "model,epoch,lang,student_accuracy,teacher_accuracy,flag\n";
  for (const auto& r : rows)
    out << r.model_id << ',' << r.epoch << ',' << r.lang.code << ',' << fmt_num(r.student_acc)
        << ',' << fmt_num(r.teacher_acc) << ',' << (r.flag ? "true" : "false") << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace hkd
