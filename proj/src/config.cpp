#include "config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace hkd {

TokenMode ExperimentConfig::token_mode() const {
  if (synthetic) return TokenMode::chars;
  return real && real->tokenizer == "chars" ? TokenMode::chars : TokenMode::whitespace;
}

std::string ExperimentConfig::tier_for(long train_sentences) const {
  if (extremely_low_max > 0 && train_sentences <= extremely_low_max) return "extremely_low";
  if (low_resource_max > 0 && train_sentences <= low_resource_max) return "low";
  return "enough";
}

namespace {

/// Collects errors and default notes while walking the JSON tree.
class Reader {
 public:
  explicit Reader(ValidatedConfig& out) : out_(out) {}

  void error(const std::string& path, const std::string& msg) {
    out_.errors.push_back(path + ": " + msg);
  }
  void note_default(const std::string& path, const std::string& value) {
    out_.applied_defaults.push_back(path + " = " + value);
  }

  void reject_unknown(const nlohmann::json& obj, const std::string& path,
                      const std::set<std::string>& known) {
    if (!obj.is_object()) return;
    for (const auto& [key, _] : obj.items())
      if (!known.count(key)) error(path.empty() ? key : path + "." + key, "unknown key");
  }

  template <typename T>
  bool get(const nlohmann::json& obj, const std::string& path, const char* key, T& target,
           bool required = false) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required)
        error(join(path, key), "required field missing");
      else
        note_default(join(path, key), to_string_of(target));
      return false;
    }
    try {
      target = obj.at(key).get<T>();
      return true;
    } catch (const nlohmann::json::exception&) {
      error(join(path, key), "wrong type");
      return false;
    }
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  template <typename T>
  static std::string to_string_of(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      std::string out = "[";
      for (const auto& s : v) out += (out.size() > 1 ? ", " : "") + s;
      return out + "]";
    } else {
      std::ostringstream ss;
      ss << v;
      return ss.str();
    }
  }

  ValidatedConfig& out_;
};

void read_synthetic(Reader& r, const nlohmann::json& j, SyntheticFamilySpec& spec) {
  const std::string p = "data.synthetic";
  r.reject_unknown(j, p,
                   {"families", "langs_per_family", "noise_rate", "train_sentences",
                    "low_resource_train_sentences", "low_resource_per_family", "dev_sentences",
                    "test_sentences", "min_sentence_words", "max_sentence_words"});
  r.get(j, p, "families", spec.n_families);
  r.get(j, p, "langs_per_family", spec.langs_per_family);
  r.get(j, p, "noise_rate", spec.noise_rate);
  r.get(j, p, "train_sentences", spec.train_sentences);
  r.get(j, p, "low_resource_train_sentences", spec.low_resource_train_sentences);
  r.get(j, p, "low_resource_per_family", spec.low_resource_per_family);
  r.get(j, p, "dev_sentences", spec.dev_sentences);
  r.get(j, p, "test_sentences", spec.test_sentences);
  r.get(j, p, "min_sentence_words", spec.min_sentence_words);
  r.get(j, p, "max_sentence_words", spec.max_sentence_words);
  try {
    spec.validate();
  } catch (const Error& e) {
    r.error("data.synthetic", e.what());
  }
}

void read_real(Reader& r, const nlohmann::json& j, RealDataConfig& real) {
  const std::string p = "data.real";
  r.reject_unknown(j, p, {"dir", "languages", "tokenizer"});
  r.get(j, p, "dir", real.dir, /*required=*/true);
  r.get(j, p, "languages", real.languages, /*required=*/true);
  r.get(j, p, "tokenizer", real.tokenizer);
  if (real.tokenizer != "whitespace" && real.tokenizer != "chars")
    r.error(p + ".tokenizer", "must be 'whitespace' or 'chars'");
  if (real.languages.empty() && real.dir.empty()) return;  // errors already recorded
  std::set<std::string> seen;
  for (const auto& code : real.languages) {
    if (code.empty()) r.error(p + ".languages", "language codes must be nonempty");
    if (!seen.insert(code).second) r.error(p + ".languages", "duplicate language '" + code + "'");
  }
}

void read_clustering(Reader& r, const nlohmann::json& j, std::vector<ClusteringConfig>& out) {
  if (!j.is_array()) {
    r.error("clustering", "must be a list");
    return;
  }
  out.clear();
  std::set<std::string> type_ids;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = "clustering[" + std::to_string(i) + "]";
    ClusteringConfig c;
    r.reject_unknown(j[i], p,
                     {"type_id", "source", "n_clusters", "kb_csv", "keep_fraction",
                      "embed_epochs"});
    r.get(j[i], p, "type_id", c.type_id, /*required=*/true);
    r.get(j[i], p, "source", c.source, /*required=*/true);
    r.get(j[i], p, "n_clusters", c.n_clusters);
    r.get(j[i], p, "kb_csv", c.kb_csv);
    r.get(j[i], p, "keep_fraction", c.keep_fraction);
    r.get(j[i], p, "embed_epochs", c.embed_epochs);
    if (c.source != "kb" && c.source != "nmt" && c.source != "fused" && c.source != "random")
      r.error(p + ".source", "must be one of kb|nmt|fused|random");
    if (c.n_clusters < 1) r.error(p + ".n_clusters", "must be >= 1");
    if (c.keep_fraction <= 0.0 || c.keep_fraction > 1.0)
      r.error(p + ".keep_fraction", "must lie in (0, 1]");
    if (c.embed_epochs < 1) r.error(p + ".embed_epochs", "must be >= 1");
    if (!c.type_id.empty() && !type_ids.insert(c.type_id).second)
      r.error(p + ".type_id", "duplicate type_id '" + c.type_id + "'");
    out.push_back(std::move(c));
  }
  if (out.empty()) r.error("clustering", "at least one clustering type required");
}

}  // namespace

ValidatedConfig validate_config_text(const std::string& text) {
  ValidatedConfig out;
  Reader r(out);

  nlohmann::json j;
  const bool blank = std::all_of(text.begin(), text.end(),
                                 [](unsigned char c) { return std::isspace(c) != 0; });
  if (blank) {
    j = nlohmann::json::object();
  } else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      out.errors.push_back(std::string("config: not valid JSON: ") + e.what());
      return out;
    }
    if (!j.is_object()) {
      out.errors.push_back("config: top level must be an object");
      return out;
    }
  }

  ExperimentConfig& cfg = out.config;
  r.reject_unknown(j, "",
                   {"data", "clustering", "model", "optimizer", "plan", "epochs", "batch_size",
                    "seed", "output_dir", "jobs", "baseline", "eval"});

  // data: exactly one of synthetic|real
  if (!j.contains("data")) {
    r.error("data", "required section missing (one of data.synthetic or data.real)");
  } else {
    const auto& data = j["data"];
    r.reject_unknown(data, "data", {"synthetic", "real"});
    const bool has_synth = data.is_object() && data.contains("synthetic");
    const bool has_real = data.is_object() && data.contains("real");
    if (has_synth == has_real) {
      r.error("data", "exactly one of data.synthetic or data.real required");
    } else if (has_synth) {
      cfg.synthetic = SyntheticFamilySpec{};
      read_synthetic(r, data["synthetic"], *cfg.synthetic);
    } else {
      cfg.real = RealDataConfig{};
      read_real(r, data["real"], *cfg.real);
    }
  }

  if (j.contains("clustering")) {
    read_clustering(r, j["clustering"], cfg.clustering);
  } else {
    cfg.clustering = {ClusteringConfig{"c1", "random", 1, "", 0.99, 2}};
    r.note_default("clustering", "[{type_id: c1, source: random, n_clusters: 1}]");
  }

  {
    const auto model = j.value("model", nlohmann::json::object());
    r.reject_unknown(model, "model", {"embed_dim", "hidden_dim"});
    r.get(model, "model", "embed_dim", cfg.model.embed);
    r.get(model, "model", "hidden_dim", cfg.model.hidden);
    if (cfg.model.embed < 1) r.error("model.embed_dim", "must be >= 1");
    if (cfg.model.hidden < 1) r.error("model.hidden_dim", "must be >= 1");
  }

  {
    const auto opt = j.value("optimizer", nlohmann::json::object());
    r.reject_unknown(opt, "optimizer", {"learning_rate", "beta1", "beta2", "epsilon"});
    r.get(opt, "optimizer", "learning_rate", cfg.learning_rate);
    r.get(opt, "optimizer", "beta1", cfg.beta1);
    r.get(opt, "optimizer", "beta2", cfg.beta2);
    r.get(opt, "optimizer", "epsilon", cfg.epsilon);
    if (cfg.learning_rate <= 0.0) r.error("optimizer.learning_rate", "must be > 0");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0) r.error("optimizer.beta1", "must lie in [0, 1)");
    if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) r.error("optimizer.beta2", "must lie in [0, 1)");
    if (cfg.epsilon <= 0.0) r.error("optimizer.epsilon", "must be > 0");
  }

  {
    const auto plan = j.value("plan", nlohmann::json::object());
    r.reject_unknown(plan, "plan",
                     {"lambda", "lambda1", "lambda2", "check_every", "threshold",
                      "accuracy_metric", "exclude_worst_ta"});
    r.get(plan, "plan", "lambda", cfg.plan.lambda);
    r.get(plan, "plan", "lambda1", cfg.plan.lambda1);
    {
      const auto l2 = plan.is_object() ? plan.value("lambda2", nlohmann::json::object())
                                       : nlohmann::json::object();
      r.reject_unknown(l2, "plan.lambda2", {"start", "end", "total_steps", "shape"});
      r.get(l2, "plan.lambda2", "start", cfg.plan.lambda2.start);
      r.get(l2, "plan.lambda2", "end", cfg.plan.lambda2.end);
      r.get(l2, "plan.lambda2", "total_steps", cfg.plan.lambda2.total_steps);
      r.get(l2, "plan.lambda2", "shape", cfg.lambda2_shape);
      if (cfg.lambda2_shape == "linear")
        cfg.plan.lambda2.shape = AnnealShape::linear;
      else if (cfg.lambda2_shape == "sigmoid")
        cfg.plan.lambda2.shape = AnnealShape::sigmoid;
      else
        r.error("plan.lambda2.shape", "must be 'linear' or 'sigmoid'");
      if (cfg.plan.lambda2.total_steps < 0) r.error("plan.lambda2.total_steps", "must be >= 0");
    }
    r.get(plan, "plan", "check_every", cfg.plan.check_every);
    r.get(plan, "plan", "threshold", cfg.plan.threshold);
    std::string metric = cfg.plan.use_token_accuracy ? "token_accuracy" : "bleu";
    r.get(plan, "plan", "accuracy_metric", metric);
    if (metric == "bleu")
      cfg.plan.use_token_accuracy = false;
    else if (metric == "token_accuracy")
      cfg.plan.use_token_accuracy = true;
    else
      r.error("plan.accuracy_metric", "must be 'bleu' or 'token_accuracy'");
    r.get(plan, "plan", "exclude_worst_ta", cfg.plan.exclude_worst_ta);
    if (cfg.plan.lambda < 0.0 || cfg.plan.lambda > 1.0)
      r.error("plan.lambda", "must lie in [0, 1]");
    if (cfg.plan.lambda2.start > cfg.plan.lambda2.end)
      r.error("plan.lambda2", "start must be <= end");
    if (cfg.plan.check_every < 1) r.error("plan.check_every", "must be >= 1");
  }

  {
    const auto epochs = j.value("epochs", nlohmann::json::object());
    r.reject_unknown(epochs, "epochs", {"teachers", "tas", "student"});
    r.get(epochs, "epochs", "teachers", cfg.epochs_teachers);
    r.get(epochs, "epochs", "tas", cfg.epochs_tas);
    r.get(epochs, "epochs", "student", cfg.epochs_student);
    if (cfg.epochs_teachers < 1) r.error("epochs.teachers", "must be >= 1");
    if (cfg.epochs_tas < 1) r.error("epochs.tas", "must be >= 1");
    if (cfg.epochs_student < 1) r.error("epochs.student", "must be >= 1");
  }

  r.get(j, "", "batch_size", cfg.batch_size);
  if (cfg.batch_size < 1) r.error("batch_size", "must be >= 1");
  r.get(j, "", "seed", cfg.seed);
  r.get(j, "", "output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) r.error("output_dir", "must be nonempty");
  r.get(j, "", "jobs", cfg.jobs);
  if (cfg.jobs < 1) r.error("jobs", "must be >= 1");

  {
    const auto baseline = j.value("baseline", nlohmann::json::object());
    r.reject_unknown(baseline, "baseline", {"enabled", "epochs"});
    r.get(baseline, "baseline", "enabled", cfg.baseline_enabled);
    r.get(baseline, "baseline", "epochs", cfg.baseline_epochs);
    if (cfg.baseline_epochs < 0) r.error("baseline.epochs", "must be >= 0");
  }

  {
    const auto eval = j.value("eval", nlohmann::json::object());
    r.reject_unknown(eval, "eval", {"max_decode_len", "low_resource_max", "extremely_low_max"});
    r.get(eval, "eval", "max_decode_len", cfg.max_decode_len);
    r.get(eval, "eval", "low_resource_max", cfg.low_resource_max);
    r.get(eval, "eval", "extremely_low_max", cfg.extremely_low_max);
    if (cfg.max_decode_len < 1) r.error("eval.max_decode_len", "must be >= 1");
    if (cfg.low_resource_max < 0) r.error("eval.low_resource_max", "must be >= 0");
    if (cfg.extremely_low_max < 0) r.error("eval.extremely_low_max", "must be >= 0");
  }

  // kb-sourced clusterings need a CSV when no synthetic generator provides one
  if (!cfg.synthetic) {
    for (size_t i = 0; i < cfg.clustering.size(); ++i) {
      const auto& c = cfg.clustering[i];
      if ((c.source == "kb" || c.source == "fused") && c.kb_csv.empty())
        r.error("clustering[" + std::to_string(i) + "].kb_csv",
                "required for kb/fused sources with real data");
    }
  }

  return out;
}

ValidatedConfig validate_config(const std::filesystem::path& path) {
  return validate_config_text(read_file(path));
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  if (config.synthetic) {
    const auto& s = *config.synthetic;
    j["data"]["synthetic"] = {{"families", s.n_families},
                              {"langs_per_family", s.langs_per_family},
                              {"noise_rate", s.noise_rate},
                              {"train_sentences", s.train_sentences},
                              {"low_resource_train_sentences", s.low_resource_train_sentences},
                              {"low_resource_per_family", s.low_resource_per_family},
                              {"dev_sentences", s.dev_sentences},
                              {"test_sentences", s.test_sentences},
                              {"min_sentence_words", s.min_sentence_words},
                              {"max_sentence_words", s.max_sentence_words}};
  } else if (config.real) {
    j["data"]["real"] = {{"dir", config.real->dir},
                         {"languages", config.real->languages},
                         {"tokenizer", config.real->tokenizer}};
  }
  auto& clustering = j["clustering"] = nlohmann::json::array();
  for (const auto& c : config.clustering) {
    nlohmann::json e = {{"type_id", c.type_id},
                        {"source", c.source},
                        {"n_clusters", c.n_clusters},
                        {"keep_fraction", c.keep_fraction},
                        {"embed_epochs", c.embed_epochs}};
    if (!c.kb_csv.empty()) e["kb_csv"] = c.kb_csv;
    clustering.push_back(std::move(e));
  }
  j["model"] = {{"embed_dim", config.model.embed}, {"hidden_dim", config.model.hidden}};
  j["optimizer"] = {{"learning_rate", config.learning_rate},
                    {"beta1", config.beta1},
                    {"beta2", config.beta2},
                    {"epsilon", config.epsilon}};
  j["plan"] = {{"lambda", config.plan.lambda},
               {"lambda1", config.plan.lambda1},
               {"lambda2",
                {{"start", config.plan.lambda2.start},
                 {"end", config.plan.lambda2.end},
                 {"total_steps", config.plan.lambda2.total_steps},
                 {"shape", config.lambda2_shape}}},
               {"check_every", config.plan.check_every},
               {"threshold", config.plan.threshold},
               {"accuracy_metric", config.plan.use_token_accuracy ? "token_accuracy" : "bleu"},
               {"exclude_worst_ta", config.plan.exclude_worst_ta}};
  j["epochs"] = {{"teachers", config.epochs_teachers},
                 {"tas", config.epochs_tas},
                 {"student", config.epochs_student}};
  j["batch_size"] = config.batch_size;
  j["seed"] = config.seed;
  j["output_dir"] = config.output_dir;
  j["jobs"] = config.jobs;
  j["baseline"] = {{"enabled", config.baseline_enabled}, {"epochs", config.baseline_epochs}};
  j["eval"] = {{"max_decode_len", config.max_decode_len},
               {"low_resource_max", config.low_resource_max},
               {"extremely_low_max", config.extremely_low_max}};
  return j;
}

}  // namespace hkd
