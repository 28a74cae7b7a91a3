#include "experiment.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

namespace hkd {

namespace fs = std::filesystem;

Experiment::Experiment(ExperimentConfig config) : cfg_(std::move(config)) {
  if (!cfg_.synthetic && !cfg_.real)
    throw config_error("experiment needs a data section (synthetic or real)");
}

void Experiment::set_jobs(int jobs) {
  if (jobs < 1) throw validation_error("jobs must be >= 1");
  cfg_.jobs = jobs;
}

fs::path Experiment::data_dir() const {
  return cfg_.synthetic ? output() / "data" : fs::path(cfg_.real->dir);
}

std::vector<AccessRecord> Experiment::access_log() const {
  return bundle_ ? bundle_->store.access_log() : std::vector<AccessRecord>{};
}

namespace {

std::vector<LanguageId> synthetic_language_codes(const SyntheticFamilySpec& spec) {
  std::vector<LanguageId> out;
  for (int f = 0; f < spec.n_families; ++f)
    for (int j = 0; j < spec.langs_per_family; ++j)
      out.push_back(LanguageId{std::string(1, static_cast<char>('a' + f)) + std::to_string(j + 1)});
  return out;
}

}  // namespace

DataBundle& Experiment::bundle() {
  if (bundle_) return *bundle_;

  const fs::path dir = data_dir();
  const auto languages =
      cfg_.synthetic ? synthetic_language_codes(*cfg_.synthetic) : [&] {
        std::vector<LanguageId> out;
        for (const auto& code : cfg_.real->languages) out.push_back(LanguageId{code});
        return out;
      }();

  auto bptr = std::make_unique<DataBundle>();
  DataBundle& b = *bptr;
  b.languages = languages;

  std::vector<std::vector<std::string>> train_texts;
  for (const auto& lang : languages) {
    const fs::path src = dir / "train" / (lang.code + ".src");
    const fs::path tgt = dir / "train" / (lang.code + ".tgt");
    if (!fs::exists(src) || !fs::exists(tgt))
      throw io_error("missing training files for " + lang.code + " under " + dir.string() +
                     (cfg_.synthetic ? " (run the gen-data stage first)" : ""));
    std::vector<std::string> text = read_lines(src);
    for (auto& line : read_lines(tgt)) text.push_back(std::move(line));
    train_texts.push_back(std::move(text));
  }
  b.vocab = build_vocab(train_texts, cfg_.token_mode());
  b.vocab.add_language_tags(languages);

  for (const auto& lang : languages) {
    for (auto split : {Split::train, Split::dev, Split::test}) {
      const fs::path base = dir / split_name(split);
      b.store.put(load_parallel(base / (lang.code + ".src"), base / (lang.code + ".tgt"), lang,
                                b.vocab, cfg_.token_mode(), split));
    }
    b.train_sizes[lang] =
        static_cast<long>(b.store.get(lang, Split::train).size());
  }

  const fs::path families_csv = dir / "families.csv";
  if (fs::exists(families_csv)) {
    auto lines = read_lines(families_csv);
    for (size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto comma = lines[i].find(',');
      b.families[LanguageId{lines[i].substr(0, comma)}] = lines[i].substr(comma + 1);
    }
  }

  bundle_ = std::move(bptr);
  return *bundle_;
}

TrainContext Experiment::train_context() {
  auto& b = bundle();
  TrainContext ctx;
  ctx.vocab = &b.vocab;
  ctx.data = &b.store;
  ctx.dims = ModelDims{b.vocab.size(), cfg_.model.embed, cfg_.model.hidden};
  ctx.learning_rate = cfg_.learning_rate;
  ctx.beta1 = cfg_.beta1;
  ctx.beta2 = cfg_.beta2;
  ctx.epsilon = cfg_.epsilon;
  ctx.batch_size = cfg_.batch_size;
  ctx.max_decode_len = cfg_.max_decode_len;
  return ctx;
}

SequenceModel Experiment::load_model(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw config_error("missing checkpoint for " + what + ": " + path.string());
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.model.dims().vocab != bundle().vocab.size())
    throw config_error("checkpoint " + path.string() +
                       " was trained with a different vocabulary; regenerate the pipeline");
  return std::move(ckpt.model);
}

void Experiment::write_snapshot() {
  write_file_atomic(output() / "resolved_config.json", config_to_json(cfg_).dump(2) + "\n");
}

void Experiment::run_stage(const std::string& stage) {
  static const std::set<std::string> known = {"gen-data",   "cluster",      "train-teachers",
                                              "train-tas",  "train-student", "evaluate",
                                              "report",     "pipeline"};
  if (!known.count(stage)) {
    std::string names;
    for (const auto& s : known) names += (names.empty() ? "" : ", ") + s;
    throw validation_error("unknown stage '" + stage + "' (expected one of: " + names + ")");
  }

  fs::create_directories(output());
  write_snapshot();

  auto run = [&](const std::string& name) {
    if (bundle_) bundle_->store.set_stage(name);
    try {
      if (name == "gen-data") {
        stage_gen_data();
      } else if (name == "cluster") {
        stage_cluster();
      } else if (name == "train-teachers") {
        stage_train_teachers();
      } else if (name == "train-tas") {
        stage_train_tas();
      } else if (name == "train-student") {
        stage_train_student();
      } else if (name == "evaluate") {
        stage_evaluate();
      } else if (name == "report") {
        stage_report();
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "[stage " + name + "] " + e.what() +
                                " -- fix the cause and re-run with --resume to keep finished "
                                "artifacts");
    }
  };

  if (stage == "pipeline") {
    if (cfg_.synthetic) run("gen-data");
    for (const char* name : {"cluster", "train-teachers", "train-tas", "train-student",
                             "evaluate", "report"})
      run(name);
  } else {
    run(stage);
  }
}

void Experiment::stage_gen_data() {
  if (!cfg_.synthetic) throw validation_error("gen-data requires data.synthetic in the config");
  const fs::path dir = output() / "data";
  const fs::path manifest = dir / "MANIFEST.json";
  if (resume_ && fs::exists(manifest)) {
    std::cerr << "[gen-data] data already present, skipping\n";
    return;
  }

  const auto data = generate_synthetic_text(*cfg_.synthetic, derive_seed(cfg_.seed, "gen-data"));

  std::vector<std::string> files;
  for (const auto& [split, by_lang] : data.text) {
    for (const auto& [lang, pairs] : by_lang) {
      std::string src, tgt;
      for (const auto& p : pairs) {
        src += p.source + "\n";
        tgt += p.target + "\n";
      }
      const fs::path base = dir / split_name(split);
      write_file_atomic(base / (lang.code + ".src"), src);
      write_file_atomic(base / (lang.code + ".tgt"), tgt);
      files.push_back(std::string(split_name(split)) + "/" + lang.code + ".src");
      files.push_back(std::string(split_name(split)) + "/" + lang.code + ".tgt");
    }
  }

  {
    std::ostringstream kb;
    const int dim = static_cast<int>(data.kb.begin()->second.size());
    kb << "lang";
    for (int i = 1; i <= dim; ++i) kb << ",f" << i;
    kb << '\n';
    for (const auto& [lang, row] : data.kb) {
      kb << lang.code;
      for (int bit : row) kb << ',' << bit;
      kb << '\n';
    }
    write_file_atomic(dir / "kb.csv", kb.str());
  }
  {
    std::ostringstream fam;
    fam << "lang,family\n";
    for (const auto& [lang, f] : data.family)
      fam << lang.code << ',' << static_cast<char>('a' + f) << '\n';
    write_file_atomic(dir / "families.csv", fam.str());
  }

  nlohmann::json m;
  m["languages"] = nlohmann::json::array();
  for (const auto& lang : data.languages) m["languages"].push_back(lang.code);
  m["files"] = files;
  write_file_atomic(manifest, m.dump(2) + "\n");
  std::cerr << "[gen-data] wrote " << files.size() << " corpus files for " << data.languages.size()
            << " languages\n";
}

std::vector<Clustering> Experiment::clusterings() {
  if (clusterings_) return *clusterings_;
  const fs::path csv = output() / "cluster" / "clusters.csv";
  if (!fs::exists(csv))
    throw config_error("missing " + csv.string() + " (run the cluster stage first)");
  clusterings_ = load_clusterings_csv(csv);
  // every experiment language must be covered by every clustering
  for (const auto& clustering : *clusterings_)
    for (const auto& lang : bundle().languages) effective_clusters(lang, {clustering});
  return *clusterings_;
}

void Experiment::stage_cluster() {
  auto& b = bundle();
  b.store.set_stage("cluster");
  const fs::path csv = output() / "cluster" / "clusters.csv";
  if (resume_ && fs::exists(csv)) {
    std::cerr << "[cluster] clusters.csv already present, skipping\n";
    return;
  }

  auto kb_for = [&](const ClusteringConfig& c) {
    const fs::path path = c.kb_csv.empty() ? data_dir() / "kb.csv" : fs::path(c.kb_csv);
    LanguageVectorSet all = load_kb_csv(path);
    // reorder to the experiment's language set
    LanguageVectorSet set;
    set.kind = VectorKind::kb;
    set.languages = b.languages;
    set.vectors.resize(static_cast<long>(b.languages.size()), all.vectors.cols());
    for (size_t i = 0; i < b.languages.size(); ++i) {
      auto it = std::find(all.languages.begin(), all.languages.end(), b.languages[i]);
      if (it == all.languages.end())
        throw validation_error("kb csv " + path.string() + " has no row for " +
                               b.languages[i].code);
      set.vectors.row(static_cast<long>(i)) =
          all.vectors.row(it - all.languages.begin());
    }
    return set;
  };

  auto nmt_for = [&](const ClusteringConfig& c) {
    TrainSpec spec;
    spec.model_id = "probe/" + c.type_id;
    spec.languages = b.languages;
    std::map<LanguageId, ParallelCorpus> train;
    for (const auto& lang : b.languages) train.emplace(lang, b.store.get(lang, Split::train));
    spec.corpora = upsample(train, derive_seed(cfg_.seed, "upsample/probe/" + c.type_id));
    spec.epochs = c.embed_epochs;
    spec.seed = derive_seed(cfg_.seed, "cluster/probe/" + c.type_id);
    spec.ckpt_path = output() / "cluster" / ("embed_probe_" + c.type_id + ".ckpt");
    spec.resume = resume_;
    auto result = run_training(train_context(), spec);
    return learn_language_embeddings(result.model, b.vocab, b.languages);
  };

  std::vector<Clustering> out;
  for (const auto& c : cfg_.clustering) {
    Clustering clustering;
    if (c.source == "kb") {
      clustering = kmeans(kb_for(c), c.n_clusters, derive_seed(cfg_.seed, "cluster/kmeans/" + c.type_id));
    } else if (c.source == "nmt") {
      clustering =
          kmeans(nmt_for(c), c.n_clusters, derive_seed(cfg_.seed, "cluster/kmeans/" + c.type_id));
    } else if (c.source == "fused") {
      auto fused = svcca_fuse(kb_for(c), nmt_for(c), c.keep_fraction);
      for (const auto& w : fused.warnings) std::cerr << "[cluster] " << c.type_id << ": " << w << '\n';
      clustering = kmeans(fused.fused, c.n_clusters,
                          derive_seed(cfg_.seed, "cluster/kmeans/" + c.type_id));
    } else {  // random
      clustering =
          random_clustering(b.languages, c.n_clusters, derive_seed(cfg_.seed, "cluster/random/" + c.type_id));
    }
    clustering.type_id = c.type_id;
    out.push_back(std::move(clustering));
    std::cerr << "[cluster] " << c.type_id << " (" << c.source << "): " << c.n_clusters
              << " clusters\n";
  }
  save_clusterings_csv(csv, out);
  clusterings_ = out;
}

void Experiment::stage_train_teachers() {
  auto& b = bundle();
  b.store.set_stage("train-teachers");
  TrainContext ctx = train_context();
  parallel_for(b.languages.size(), cfg_.jobs, [&](size_t i) {
    const auto& lang = b.languages[i];
    TrainSpec spec;
    spec.model_id = "teacher/" + lang.code;
    spec.languages = {lang};
    spec.corpora.emplace(lang, b.store.get(lang, Split::train));
    spec.epochs = cfg_.epochs_teachers;
    spec.seed = derive_seed(cfg_.seed, "teachers/" + lang.code);
    spec.ckpt_path = output() / "teachers" / (lang.code + ".ckpt");
    spec.resume = resume_;
    auto result = run_training(ctx, spec);
    std::cerr << "[train-teachers] " << lang.code << ": " << result.global_step << " steps\n";
  });
}

void Experiment::stage_train_tas() {
  auto& b = bundle();
  b.store.set_stage("train-tas");
  TrainContext ctx = train_context();
  const auto clusters = clusterings();

  struct Task {
    std::string label;
    std::vector<LanguageId> members;
  };
  std::vector<Task> tasks;
  for (const auto& clustering : clusters)
    for (int c = 1; c <= clustering.n; ++c)
      tasks.push_back(Task{clustering.type_id + "_" + std::to_string(c), clustering.members(c)});

  std::vector<std::vector<FlagLogRow>> flag_rows(tasks.size());
  parallel_for(tasks.size(), cfg_.jobs, [&](size_t i) {
    const auto& task = tasks[i];
    std::map<LanguageId, SequenceModel> teachers;
    for (const auto& lang : task.members)
      teachers.emplace(lang,
                       load_model(output() / "teachers" / (lang.code + ".ckpt"),
                                  "teacher " + lang.code));
    std::map<LanguageId, ParallelCorpus> train;
    for (const auto& lang : task.members) train.emplace(lang, b.store.get(lang, Split::train));

    TrainSpec spec;
    spec.model_id = "ta/" + task.label;
    spec.languages = task.members;
    spec.corpora = upsample(train, derive_seed(cfg_.seed, "upsample/ta/" + task.label));
    spec.epochs = cfg_.epochs_tas;
    spec.seed = derive_seed(cfg_.seed, "ta/" + task.label);
    spec.teachers = &teachers;
    spec.plan = &cfg_.plan;
    spec.ckpt_path = output() / "tas" / (task.label + ".ckpt");
    spec.resume = resume_;
    auto result = run_training(ctx, spec);
    flag_rows[i] = std::move(result.flag_rows);
    std::cerr << "[train-tas] " << task.label << ": " << result.global_step << " steps, "
              << result.flags.history.size() << " flag flips\n";
  });

  std::vector<FlagLogRow> merged;
  for (auto& rows : flag_rows) merged.insert(merged.end(), rows.begin(), rows.end());
  write_flags_csv(output() / "logs" / "flags.csv", merged);
}

void Experiment::stage_train_student() {
  auto& b = bundle();
  b.store.set_stage("train-student");
  TrainContext ctx = train_context();
  const auto clusters = clusterings();

  std::map<std::string, SequenceModel> tas;
  for (const auto& clustering : clusters)
    for (int c = 1; c <= clustering.n; ++c) {
      const std::string label = clustering.type_id + "_" + std::to_string(c);
      tas.emplace(label, load_model(output() / "tas" / (label + ".ckpt"),
                                    "teacher-assistant " + label));
    }
  const auto effective = build_effective_index(b.languages, clusters);

  std::map<LanguageId, ParallelCorpus> train;
  for (const auto& lang : b.languages) train.emplace(lang, b.store.get(lang, Split::train));
  auto upsampled = upsample(train, derive_seed(cfg_.seed, "upsample/student"));

  DistillationPlan plan = cfg_.plan;
  if (plan.lambda2.total_steps == 0) {
    long steps = 0;
    for (const auto& [_, corpus] : upsampled)
      steps += (static_cast<long>(corpus.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    plan.lambda2.total_steps = steps * cfg_.epochs_student;
    std::cerr << "[train-student] lambda2 schedule resolved to " << plan.lambda2.total_steps
              << " steps\n";
  }

  TrainSpec spec;
  spec.model_id = "student";
  spec.languages = b.languages;
  spec.corpora = upsampled;
  spec.epochs = cfg_.epochs_student;
  spec.seed = derive_seed(cfg_.seed, "student");
  spec.tas = &tas;
  spec.effective = &effective;
  spec.plan = &plan;
  spec.ckpt_path = output() / "student.ckpt";
  spec.resume = resume_;
  auto result = run_training(ctx, spec);
  write_alpha_csv(output() / "logs" / "alpha.csv", result.alpha_rows);
  std::cerr << "[train-student] " << result.global_step << " steps\n";

  if (cfg_.baseline_enabled) {
    TrainSpec base;
    base.model_id = "baseline";
    base.languages = b.languages;
    base.corpora = upsampled;  // identical data budget
    base.epochs = cfg_.baseline_epochs > 0 ? cfg_.baseline_epochs : cfg_.epochs_student;
    base.seed = derive_seed(cfg_.seed, "baseline");
    base.ckpt_path = output() / "baseline.ckpt";
    base.resume = resume_;
    auto base_result = run_training(ctx, base);
    std::cerr << "[train-student] baseline: " << base_result.global_step << " steps\n";
  }
}

double Experiment::corpus_bleu_of(const SequenceModel& model, const ParallelCorpus& corpus) {
  const int tag = bundle().vocab.tag_id(corpus.lang);
  std::vector<std::vector<int>> hyps, refs;
  hyps.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    std::vector<int> src;
    src.push_back(tag);
    src.insert(src.end(), p.source.begin(), p.source.end());
    hyps.push_back(greedy_decode(model, src, cfg_.max_decode_len));
    refs.push_back(p.target);
  }
  return bleu(hyps, refs).score;
}

void Experiment::stage_evaluate() {
  auto& b = bundle();
  b.store.set_stage("evaluate");
  const auto clusters = clusterings();
  const auto effective = build_effective_index(b.languages, clusters);

  TrainReport report;
  auto tier = [&](const LanguageId& lang) { return cfg_.tier_for(b.train_sizes.at(lang)); };

  std::map<std::string, SequenceModel> tas;
  for (const auto& clustering : clusters)
    for (int c = 1; c <= clustering.n; ++c) {
      const std::string label = clustering.type_id + "_" + std::to_string(c);
      tas.emplace(label, load_model(output() / "tas" / (label + ".ckpt"),
                                    "teacher-assistant " + label));
    }
  SequenceModel student = load_model(output() / "student.ckpt", "student");
  std::optional<SequenceModel> baseline;
  if (fs::exists(output() / "baseline.ckpt"))
    baseline = load_model(output() / "baseline.ckpt", "baseline");

  struct LangEval {
    std::vector<ReportRow> rows;
    std::map<std::string, double> dev_bleu;
  };
  std::vector<LangEval> evals(b.languages.size());
  parallel_for(b.languages.size(), cfg_.jobs, [&](size_t i) {
    const auto& lang = b.languages[i];
    const auto& test = b.store.get(lang, Split::test);
    const auto& dev = b.store.get(lang, Split::dev);
    auto& ev = evals[i];

    SequenceModel teacher =
        load_model(output() / "teachers" / (lang.code + ".ckpt"), "teacher " + lang.code);
    ev.rows.push_back(ReportRow{"teacher", lang, tier(lang), corpus_bleu_of(teacher, test)});
    for (const auto& ec : effective.at(lang)) {
      const auto& ta = tas.at(ec.label());
      ev.rows.push_back(
          ReportRow{"ta:" + ec.type_id, lang, tier(lang), corpus_bleu_of(ta, test)});
      ev.dev_bleu[ec.type_id + ":" + std::to_string(ec.cluster)] = corpus_bleu_of(ta, dev);
    }
    if (baseline)
      ev.rows.push_back(ReportRow{"baseline", lang, tier(lang), corpus_bleu_of(*baseline, test)});
    ev.rows.push_back(ReportRow{"student", lang, tier(lang), corpus_bleu_of(student, test)});
  });

  std::map<LanguageId, std::vector<double>> ta_scores;
  for (size_t i = 0; i < b.languages.size(); ++i) {
    const auto& lang = b.languages[i];
    for (auto& row : evals[i].rows) report.rows.push_back(std::move(row));
    report.ta_dev_bleu[lang] = evals[i].dev_bleu;
    for (const auto& [_, score] : evals[i].dev_bleu) ta_scores[lang].push_back(score);
  }
  report.ta_bleu_variance = ta_variance(ta_scores);
  report.rankings = rank_systems(report.rows);

  const fs::path alpha_csv = output() / "logs" / "alpha.csv";
  if (fs::exists(alpha_csv)) {
    std::map<std::pair<LanguageId, std::string>, std::pair<double, long>> acc;
    for (const auto& row : read_alpha_csv(alpha_csv)) {
      auto& [sum, count] = acc[{row.lang, row.ta}];
      sum += row.alpha;
      ++count;
    }
    for (const auto& [key, sum_count] : acc)
      report.alpha_summary.push_back(AlphaSummaryRow{
          key.first, key.second, sum_count.first / static_cast<double>(sum_count.second),
          sum_count.second});
  }

  if (!b.families.empty()) {
    report.family = b.families;
    std::map<std::string, std::map<std::string, std::pair<double, long>>> acc;
    for (const auto& row : report.rows) {
      auto fam = b.families.find(row.lang);
      if (fam == b.families.end()) continue;
      auto& [sum, count] = acc[fam->second][row.system];
      sum += row.bleu;
      ++count;
    }
    for (const auto& [family, by_system] : acc)
      for (const auto& [system, sum_count] : by_system)
        report.family_mean[family][system] =
            sum_count.first / static_cast<double>(sum_count.second);
  }

  write_file_atomic(output() / "report.csv", report_to_csv(report));
  write_file_atomic(output() / "report.json", report_to_json(report).dump(2) + "\n");
  std::cerr << "[evaluate] " << report.rows.size() << " system/language scores\n";
}

void Experiment::stage_report() {
  const fs::path json_path = output() / "report.json";
  if (!fs::exists(json_path))
    throw config_error("missing " + json_path.string() + " (run the evaluate stage first)");
  const TrainReport report = report_from_json(nlohmann::json::parse(read_file(json_path)));
  write_file_atomic(output() / "report.md", report_to_markdown(report));
  std::cerr << "[report] wrote report.md\n";
}

}  // namespace hkd
