// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include <json.hpp>

#include <mmfuse/datagen.hpp>
#include <mmfuse/error.hpp>
#include <mmfuse/fusion.hpp>
#include <mmfuse/jsonl.hpp>
#include <mmfuse/metrics.hpp>
#include <mmfuse/numcore.hpp>
#include <mmfuse/random.hpp>
#include <mmfuse/sampler.hpp>
#include <mmfuse/toylm.hpp>

namespace mmfuse::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const DomainError*>(&e)) {
    return kConfigError;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const LookupError*>(&e)) {
    return kIoError;
  }
  if (dynamic_cast<const NumericError*>(&e)) return kNumericError;
  return kInternalError;
}

namespace {

// Collects every output of a command and writes them only once all of them
// have been computed, so a failing command leaves no partial results.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  void commit() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    for (const auto& [name, content] : files_) write_text_file_atomic(dir_ / name, content);
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GroupSpec spec_of(const RunConfig& config) {
  GroupSpec spec = config.group_spec;
  spec.seed = config.seed;
  return spec;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from(const json& j, const std::string& what) {
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<double> data;
    for (const auto& r : rows) {
      if (r.size() != cols) throw ParseError(what + ": ragged matrix");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

std::string fusion_to_json(const FusionParams& p) {
  const auto proj = [](const ProjectionParams& pp) {
    return json{{"weight", matrix_json(pp.weight)}, {"bias", pp.bias}};
  };
  json doc = {{"alpha_logit", p.alpha_logit},
              {"alpha", p.alpha()},
              {"projection_1", proj(p.projection_1)},
              {"projection_2", proj(p.projection_2)}};
  return doc.dump(2) + "\n";
}

FusionParams load_fusion(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
    FusionParams p;
    p.alpha_logit = doc.at("alpha_logit").get<double>();
    for (auto [key, target] : {std::pair{"projection_1", &p.projection_1}, std::pair{"projection_2", &p.projection_2}}) {
      target->weight = matrix_from(doc.at(key).at("weight"), key);
      target->bias = doc.at(key).at("bias").get<std::vector<double>>();
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ParseError("bad fusion file '" + path.string() + "': " + e.what());
  }
}

// ---- captions ----------------------------------------------------------------

constexpr const char* kSites[] = {"thyroid", "breast", "liver", "kidney", "carotid", "uterus", "gallbladder", "pancreas"};
constexpr const char* kFindings[] = {"hypoechoic nodule", "simple cyst",   "solid mass",   "calcified stone",
                                     "stable plaque",     "small polyp",   "no lesion",    "mild effusion"};

}  // namespace

Caption caption_for(std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, "caption-" + std::to_string(index)));
  std::uniform_int_distribution<std::size_t> site(0, std::size(kSites) - 1);
  std::uniform_int_distribution<std::size_t> finding(0, std::size(kFindings) - 1);
  Caption c;
  c.site = kSites[site(rng)];
  c.text = c.site + " " + kFindings[finding(rng)];
  return c;
}

// ---- gen-data ------------------------------------------------------------------

int cmd_gen_data(const RunConfig& config, std::ostream& log) {
  config.validate();
  const GroupSpec spec = spec_of(config);
  FusionParams fusion = aligned_fusion_params(spec);
  fusion.alpha_logit = config.fusion.alpha_logit_init;

  const std::size_t n = config.total_groups();
  std::vector<RedundantGroup> groups;
  std::vector<std::string> ids;
  std::vector<FeatureMatrix> s1, s2;
  std::vector<InstructionRecord> simple, diverse;
  groups.reserve(n);
  const QuestionMode mode = config.ablations.site_prompt ? QuestionMode::site_cue : QuestionMode::no_cue;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratedGroup g = make_group(spec, i);
    for (std::size_t j = 0; j < g.group.size(); ++j) {
      g.group.image_features[j] = fuse_streams(g.stream_1[j], g.stream_2[j], fusion);
      ids.push_back(g.group.image_ids[j]);
      s1.push_back(std::move(g.stream_1[j]));
      s2.push_back(std::move(g.stream_2[j]));
    }
    const Caption cap = caption_for(config.seed, i);
    simple.push_back(build_instruction_record(cap.text, g.group.image_ids, mode, cap.site, QuestionPool::simple, i));
    diverse.push_back(build_instruction_record(cap.text, g.group.image_ids, mode, cap.site, QuestionPool::diverse, i));
    groups.push_back(std::move(g.group));
  }

  json manifest = {{"seed", config.seed},
                   {"groups", n},
                   {"train_groups", config.train_groups},
                   {"heldout_groups", config.heldout_groups},
                   {"images_per_group", spec.k},
                   {"image_entries", ids.size()},
                   {"instruction_records", simple.size()},
                   {"channels", spec.channels},
                   {"files",
                    {kGroupsFile, kInstructionsFile, kDiverseInstructionsFile, kStream1File, kStream2File,
                     kFusionFile}},
                   {"config", json::parse(run_config_to_json(config))}};

  OutputSet out(config.paths.out_dir);
  out.add(kGroupsFile, groups_to_jsonl(groups));
  out.add(kInstructionsFile, instructions_to_jsonl(simple));
  out.add(kDiverseInstructionsFile, instructions_to_jsonl(diverse));
  out.add(kStream1File, features_to_jsonl(ids, s1));
  out.add(kStream2File, features_to_jsonl(ids, s2));
  out.add(kFusionFile, fusion_to_json(fusion));
  out.add(kManifestFile, manifest.dump(2) + "\n");
  out.commit();
  log << "gen-data: " << n << " groups, " << ids.size() << " image entries -> " << config.paths.out_dir.string()
      << "\n";
  return kOk;
}

// ---- shared loading ---------------------------------------------------------------

namespace {

std::vector<RedundantGroup> load_groups(const RunConfig& config) {
  auto groups = read_groups_jsonl(config.paths.data() / kGroupsFile);
  if (groups.size() != config.total_groups()) {
    throw ConfigError("dataset has " + std::to_string(groups.size()) + " groups but the config expects " +
                      std::to_string(config.total_groups()));
  }
  for (const auto& g : groups) {
    if (g.channels() != config.group_spec.channels) {
      throw ConfigError("group " + g.group_id + " has " + std::to_string(g.channels()) +
                        " channels, config expects " + std::to_string(config.group_spec.channels));
    }
  }
  if (!config.ablations.visual_enhancement) {
    // Single-encoder variant: stream 1 through its own projection, no fusion.
    const FusionParams fusion = load_fusion(config.paths.data() / kFusionFile);
    const EncoderStub encoder = EncoderStub::from_jsonl(config.paths.data() / kStream1File);
    for (auto& g : groups) {
      for (std::size_t j = 0; j < g.size(); ++j) g.image_features[j] = project(encoder.encode(g.image_ids[j]), fusion.projection_1);
    }
  }
  return groups;
}

std::span<const RedundantGroup> train_split(const RunConfig& config, const std::vector<RedundantGroup>& groups) {
  return std::span(groups).first(config.train_groups);
}

std::span<const RedundantGroup> heldout_split(const RunConfig& config, const std::vector<RedundantGroup>& groups) {
  if (config.heldout_groups == 0) return groups;
  return std::span(groups).subspan(config.train_groups);
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

FeatureMatrix stack_images(const RedundantGroup& g) {
  const std::size_t m = g.image_features.front().rows();
  FeatureMatrix out(m * g.size(), g.channels());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t r = 0; r < m; ++r) {
      auto src = g.image_features[i].row(r);
      std::copy(src.begin(), src.end(), out.row(i * m + r).begin());
    }
  }
  return out;
}

}  // namespace

// ---- train ----------------------------------------------------------------------

int cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto groups = load_groups(config);
  const auto train = train_split(config, groups);
  const std::size_t d = config.group_spec.channels;

  ScorerParams init = ScorerParams::initial(d, config.sampler.d_k, config.sampler.n_layers,
                                            derive_seed(config.seed, "scorer"), config.sampler.w_init_scale);
  SamplerHyper hyper;
  hyper.optimizer.kind = config.sampler.optimizer;
  hyper.optimizer.learning_rate = config.sampler.lr;
  hyper.steps = config.ablations.redundancy_adaptation ? config.sampler.steps : 0;
  hyper.temperature = config.sampler.temperature;
  hyper.batch = config.sampler.batch;
  hyper.loss_weight = config.sampler.adr_weight;
  hyper.target = config.ablations.attention_strategy ? DistillationTarget::attention : DistillationTarget::planted_label;
  const SamplerTrainResult sampler = train_sampler(train, init, hyper);

  // Toy LM records: the first train groups, visual input screened by the
  // trained scorer (or every image stacked when screening is ablated).
  const auto simple = read_instructions_jsonl(config.paths.data() / kInstructionsFile);
  const auto diverse = read_instructions_jsonl(config.paths.data() / kDiverseInstructionsFile);
  if (simple.size() != groups.size() || diverse.size() != groups.size()) {
    throw ConfigError("instruction files do not cover every group");
  }
  const std::size_t n_records = std::min(config.toylm.records, train.size());
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n_records; ++i) {
    texts.push_back(simple[i].question);
    texts.push_back(simple[i].answer);
    texts.push_back(diverse[i].question);
  }
  const Vocabulary vocab = Vocabulary::build(texts, config.toylm.vocab);
  std::vector<LMExample> stage1, stage2;
  for (std::size_t i = 0; i < n_records; ++i) {
    FeatureMatrix visual = config.ablations.redundancy_adaptation
                               ? train[i].image_features[select_valid(score_group(train[i], sampler.params, ScoreMode::feature))]
                               : stack_images(train[i]);
    stage1.push_back({visual, vocab.encode(simple[i].question), vocab.encode(simple[i].answer, true)});
    stage2.push_back({std::move(visual), vocab.encode(diverse[i].question), vocab.encode(diverse[i].answer, true)});
  }
  if (!(config.ablations.stage2 && config.toylm.stages == 2)) stage2.clear();

  ToyLMConfig lm_config;
  lm_config.vocab_size = vocab.size();
  lm_config.embed_dim = config.toylm.embed_dim;
  lm_config.key_dim = config.toylm.key_dim;
  lm_config.visual_dim = d;
  lm_config.adapter_rank = config.toylm.adapter_rank;
  LMTrainHyper lm_hyper;
  lm_hyper.optimizer.kind = config.toylm.optimizer;
  lm_hyper.optimizer.learning_rate = config.toylm.lr;
  lm_hyper.stage1_steps = config.toylm.stage1_steps;
  lm_hyper.stage2_steps = config.toylm.stage2_steps;
  const LMTrainResult lm =
      train_two_stage(stage1, stage2, ToyLMParams::init(lm_config, derive_seed(config.seed, "toylm")), lm_hyper);

  std::string curves = "step,stage,loss\n";
  for (std::size_t s = 0; s < sampler.loss_history.size(); ++s) {
    curves += std::to_string(s) + ",sampler," + format_double(sampler.loss_history[s]) + "\n";
  }
  for (const auto& h : lm.history) {
    curves += std::to_string(h.step) + ",stage" + std::to_string(h.stage) + "," + format_double(h.loss) + "\n";
  }
  json summary = {
      {"sampler",
       {{"steps", hyper.steps},
        {"target", config.ablations.attention_strategy ? "attention" : "planted_label"},
        {"final_train_loss", sampler.final_train_loss},
        {"mean_target_entropy", sampler.mean_target_entropy},
        {"train_accuracy", selection_accuracy(train, sampler.params, ScoreMode::feature)}}},
      {"toylm",
       {{"records", n_records},
        {"vocab_size", vocab.size()},
        {"stage1_steps", lm_hyper.stage1_steps},
        {"stage2_steps", stage2.empty() ? 0 : lm_hyper.stage2_steps},
        {"final_loss", lm.final_loss}}},
      {"ablations", json::parse(run_config_to_json(config))["ablations"]}};

  OutputSet out(config.paths.out_dir);
  out.add(kScorerFile, scorer_params_to_json(sampler.params, {config.seed, hyper.steps}));
  out.add(kToyLMFile, toylm_to_json(lm.params, &vocab));
  out.add(kLossCurveFile, std::move(curves));
  out.add(kTrainSummaryFile, summary.dump(2) + "\n");
  out.commit();
  log << "train: sampler L_adr " << format_double(sampler.final_train_loss) << " (target entropy "
      << format_double(sampler.mean_target_entropy) << "), toy LM loss " << format_double(lm.final_loss) << "\n";
  return kOk;
}

// ---- select ------------------------------------------------------------------------

int cmd_select(const RunConfig& config, const std::optional<fs::path>& scorer_path, std::ostream& log) {
  config.validate();
  const fs::path path = scorer_path.value_or(config.paths.out_dir / kScorerFile);
  const ScorerParams scorer = load_scorer_params(path);
  const auto groups = load_groups(config);
  const std::size_t d = config.group_spec.channels;
  if (scorer.w.size() != d) {
    throw ConfigError("scorer '" + path.string() + "' has " + std::to_string(scorer.w.size()) +
                      " channel weights but the data has " + std::to_string(d) + " channels");
  }
  std::string lines;
  std::size_t labeled = 0, correct = 0;
  const auto heldout = heldout_split(config, groups);
  for (const auto& g : heldout) {
    const ScoreVector s = score_group(g, scorer, ScoreMode::feature);
    const std::size_t pick = select_valid(s);
    json row = {{"group_id", g.group_id}, {"selected", pick}, {"scores", s.raw}};
    row["valid_index"] = g.planted_valid_index ? json(*g.planted_valid_index) : json(nullptr);
    lines += row.dump() + "\n";
    if (g.planted_valid_index) {
      ++labeled;
      correct += pick == *g.planted_valid_index;
    }
  }
  json summary = {{"groups", heldout.size()}, {"labeled", labeled}};
  summary["accuracy"] = labeled ? json(static_cast<double>(correct) / static_cast<double>(labeled)) : json(nullptr);
  OutputSet out(config.paths.out_dir);
  out.add(kSelectionsFile, std::move(lines));
  out.add(kSelectionSummaryFile, summary.dump(2) + "\n");
  out.commit();
  log << "select: " << heldout.size() << " groups";
  if (labeled) log << ", accuracy " << format_double(summary["accuracy"].get<double>());
  log << "\n";
  return kOk;
}

// ---- evaluate ---------------------------------------------------------------------

int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log) {
  std::vector<EvalPair> pairs;
  if (options.pairs) {
    if (options.predictions || options.references) {
      throw ConfigError("evaluate takes either --pairs or --predictions with --references");
    }
    pairs = read_eval_pairs_jsonl(*options.pairs);
  } else if (options.predictions && options.references) {
    pairs = read_aligned_eval_files(*options.predictions, *options.references);
  } else {
    throw ConfigError("evaluate needs --pairs, or --predictions together with --references");
  }
  if (pairs.empty()) throw ConfigError("evaluate: no pairs to score");
  const MetricReport report = evaluate_corpus(pairs, options.smoothing);
  OutputSet out(config.paths.out_dir);
  out.add(kMetricsFile, report_to_json(report));
  out.commit();
  const auto& c = report.corpus;
  log << "evaluate: " << report.rows.size() << " pairs  EM " << format_double(c.em) << "  F1 " << format_double(c.f1)
      << "  BLEU " << format_double(c.bleu_uniform) << "\n";
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------------

namespace {

struct Audit {
  const GradcheckOptions& options;
  std::map<std::string, GradReport> reports;
  std::vector<std::string> order;

  // `param` is the live buffer read by `loss`.
  void check(const std::string& name, std::span<double> param, const std::function<double()>& loss,
             std::vector<double> analytic) {
    if (options.corrupt && *options.corrupt == name && !analytic.empty()) analytic[0] += 1.0;
    const std::vector<double> saved(param.begin(), param.end());
    const auto f = [&](std::span<const double> x) {
      std::copy(x.begin(), x.end(), param.begin());
      const double v = loss();
      std::copy(saved.begin(), saved.end(), param.begin());
      return v;
    };
    const auto numeric = finite_diff_grad(f, saved, options.step);
    const GradReport r = check_gradients(analytic, numeric, options.tolerance, name);
    auto [it, fresh] = reports.try_emplace(name, r);
    if (fresh) {
      order.push_back(name);
    } else {
      merge_report(it->second, r);
    }
  }
};

void audit_fusion(Audit& audit, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck-fusion"));
  const std::size_t m = 3, d1 = 4, d2 = 5, d = 3;
  const Matrix s1 = gaussian_matrix(rng, m, d1, 1.0);
  const Matrix s2 = gaussian_matrix(rng, m, d2, 1.0);
  const Matrix target = gaussian_matrix(rng, m, d, 1.0);
  FusionParams p;
  p.alpha_logit = std::normal_distribution<double>(0.0, 1.0)(rng);
  p.projection_1 = {gaussian_matrix(rng, d1, d, 0.5), gaussian_vector(rng, d, 0.5)};
  p.projection_2 = {gaussian_matrix(rng, d2, d, 0.5), gaussian_vector(rng, d, 0.5)};
  // L = 0.5 * ||H_v - target||^2
  const auto loss = [&] {
    const Matrix diff = subtract(fuse_streams(s1, s2, p), target);
    return 0.5 * dot(diff.data(), diff.data());
  };
  const FusionGrads g = fusion_backward(s1, s2, p, subtract(fuse_streams(s1, s2, p), target));
  audit.check("fusion.alpha_logit", std::span(&p.alpha_logit, 1), loss, {g.alpha_logit});
  audit.check("fusion.projection_1.weight", p.projection_1.weight.data(), loss, g.projection_1.weight.values());
  audit.check("fusion.projection_1.bias", p.projection_1.bias, loss, g.projection_1.bias);
  audit.check("fusion.projection_2.weight", p.projection_2.weight.data(), loss, g.projection_2.weight.values());
  audit.check("fusion.projection_2.bias", p.projection_2.bias, loss, g.projection_2.bias);
}

void audit_sampler(Audit& audit, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck-sampler"));
  const std::size_t k = 4, m = 3, d = 5;
  std::vector<RedundantGroup> groups;
  for (std::size_t i = 0; i < 3; ++i) {
    RedundantGroup g;
    g.group_id = "g" + std::to_string(i);
    for (std::size_t j = 0; j < k; ++j) {
      g.image_ids.push_back(g.group_id + "-" + std::to_string(j));
      g.image_features.push_back(gaussian_matrix(rng, m, d, 1.0));
    }
    g.text_features = gaussian_matrix(rng, 2, d, 1.0);
    groups.push_back(std::move(g));
  }
  ScorerParams p = ScorerParams::initial(d, d, 1, derive_seed(seed, "gradcheck-scorer"), 1.0);
  std::vector<double> grad;
  adr_objective(groups, p, 1.0, &grad);
  audit.check("sampler.w", p.w, [&] { return adr_objective(groups, p, 1.0, nullptr); }, grad);
}

void audit_toylm(Audit& audit, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck-toylm"));
  ToyLMConfig config;
  config.vocab_size = 9;
  config.embed_dim = 6;
  config.key_dim = 4;
  config.visual_dim = 5;
  config.adapter_rank = 2;
  ToyLMParams p = ToyLMParams::init(config, derive_seed(seed, "gradcheck-toylm-init"));
  // Move away from the zero-initialized adapter factor and bias so every
  // gradient path is exercised.
  for (auto& [base, adapter] : p.adapters) adapter.b = gaussian_matrix(rng, adapter.b.rows(), adapter.b.cols(), 0.5);
  p.parameter(toylm_names::kContextBias) = gaussian_matrix(rng, 1, config.embed_dim, 0.5);
  std::uniform_int_distribution<std::size_t> token(0, config.vocab_size - 1);
  std::vector<LMExample> batch;
  for (std::size_t e = 0; e < 2; ++e) {
    LMExample ex;
    ex.visual = gaussian_matrix(rng, 3, config.visual_dim, 1.0);
    for (std::size_t i = 0; i < 3; ++i) ex.instruction.push_back(token(rng));
    for (std::size_t i = 0; i < 3; ++i) ex.answer.push_back(token(rng));
    batch.push_back(std::move(ex));
  }
  NamedGrads grads;
  teacher_forced_loss_and_grad(p, batch, grads);
  for (const auto& name : trainable_parameters(p)) {
    audit.check("toylm." + name, p.parameter(name).data(), [&] { return teacher_forced_loss(p, batch); },
                grads.at(name).values());
  }
}

}  // namespace

std::vector<GradReport> run_gradcheck(const GradcheckOptions& options) {
  if (options.seeds == 0) throw ConfigError("gradcheck needs at least one seed");
  if (!(options.step > 0.0) || !(options.tolerance > 0.0)) throw ConfigError("gradcheck step and tolerance must be positive");
  Audit audit{options, {}, {}};
  for (std::size_t s = 0; s < options.seeds; ++s) {
    audit_fusion(audit, s);
    audit_sampler(audit, s);
    audit_toylm(audit, s);
  }
  if (options.corrupt && !audit.reports.count(*options.corrupt)) {
    throw ConfigError("--corrupt names unknown parameter group '" + *options.corrupt + "'");
  }
  std::vector<GradReport> out;
  for (const auto& name : audit.order) out.push_back(audit.reports.at(name));
  return out;
}

int cmd_gradcheck(const RunConfig& config, const GradcheckOptions& options, std::ostream& log) {
  const auto reports = run_gradcheck(options);
  std::string csv = "parameter,max_relative_error,entries,pass\n";
  bool ok = true;
  for (const auto& r : reports) {
    csv += r.parameter_name + "," + format_double(r.max_relative_error) + "," + std::to_string(r.num_entries_checked) +
           "," + (r.pass ? "true" : "false") + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-34s %12.3e %8zu  %s\n", r.parameter_name.c_str(), r.max_relative_error,
                  r.num_entries_checked, r.pass ? "ok" : "FAIL");
    log << line;
    ok = ok && r.pass;
  }
  OutputSet out(config.paths.out_dir);
  out.add(kGradcheckFile, std::move(csv));
  out.commit();
  return ok ? kOk : kAcceptanceFailure;
}

// ---- report -------------------------------------------------------------------------

int cmd_report(const RunConfig& config, std::ostream& log) {
  const fs::path dir = config.paths.out_dir;
  const json train = parse_json(dir / kTrainSummaryFile);
  const json selection = parse_json(dir / kSelectionSummaryFile);
  json checks = json::array();
  bool ok = true;
  const auto record = [&](const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({{"check", name}, {"pass", pass}, {"detail", detail}});
    log << (pass ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    ok = ok && pass;
  };
  try {
    const double loss = train.at("sampler").at("final_train_loss").get<double>();
    const double entropy = train.at("sampler").at("mean_target_entropy").get<double>();
    const double lm_loss = train.at("toylm").at("final_loss").get<double>();
    const bool distilled = config.ablations.redundancy_adaptation && config.ablations.attention_strategy;
    if (distilled) {
      record("sampler_loss_bound", loss <= entropy + 0.05,
             "L_adr " + format_double(loss) + " <= H " + format_double(entropy) + " + 0.05");
    }
    if (config.ablations.redundancy_adaptation && !selection.at("accuracy").is_null()) {
      const double acc = selection.at("accuracy").get<double>();
      record("heldout_selection", acc >= 0.90, "accuracy " + format_double(acc) + " >= 0.90");
    }
    record("toylm_loss_finite", std::isfinite(lm_loss), "loss " + format_double(lm_loss));
  } catch (const json::exception& e) {
    throw ParseError(std::string("run summaries are incomplete: ") + e.what());
  }
  json doc = {{"checks", checks}, {"pass", ok}, {"train", train}, {"selection", selection}};
  OutputSet out(dir);
  out.add(kReportFile, doc.dump(2) + "\n");
  out.commit();
  return ok ? kOk : kAcceptanceFailure;
}

}  // namespace mmfuse::cli
