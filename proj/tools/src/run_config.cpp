// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <json.hpp>

#include <mmfuse/error.hpp>
#include <mmfuse/jsonl.hpp>

namespace mmfuse::cli {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

void read_count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + where + "." + key + "' must be a nonnegative integer");
  }
  out = v.get<std::size_t>();
}

void read_optimizer(const json& obj, OptimizerKind& out, const std::string& where) {
  std::string name;
  if (!obj.contains("optimizer")) return;
  read(obj, "optimizer", name, where);
  out = parse_optimizer_kind(name);
}

}  // namespace

void RunConfig::validate() const {
  GroupSpec spec = group_spec;
  spec.seed = seed;
  spec.validate();
  if (train_groups == 0) throw ConfigError("groups.train must be positive");
  if (fusion.d_out != group_spec.channels) {
    throw ConfigError("fusion.d_out (" + std::to_string(fusion.d_out) +
                      ") must equal group_spec.channels (" + std::to_string(group_spec.channels) + ")");
  }
  if (!(sampler.temperature > 0.0)) throw ConfigError("sampler.temperature must be positive");
  if (!(sampler.lr > 0.0)) throw ConfigError("sampler.lr must be positive");
  if (sampler.n_layers == 0 || sampler.d_k == 0) throw ConfigError("sampler.n_layers and sampler.d_k must be positive");
  if (sampler.batch == 0) throw ConfigError("sampler.batch must be positive");
  if (!(sampler.adr_weight > 0.0)) throw ConfigError("sampler.adr_weight must be positive");
  if (toylm.stages < 1 || toylm.stages > 2) throw ConfigError("toylm.stages must be 1 or 2");
  if (toylm.vocab < 8) throw ConfigError("toylm.vocab must be at least 8");
  if (toylm.embed_dim == 0 || toylm.key_dim == 0) throw ConfigError("toylm dimensions must be positive");
  if (toylm.adapter_rank == 0 || toylm.adapter_rank >= std::min(toylm.embed_dim, toylm.vocab)) {
    throw ConfigError("toylm.adapter_rank must lie in [1, min(embed_dim, vocab))");
  }
  if (toylm.records == 0) throw ConfigError("toylm.records must be positive");
  if (!(toylm.lr > 0.0)) throw ConfigError("toylm.lr must be positive");
}

RunConfig parse_run_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  reject_unknown(doc, {"seed", "group_spec", "groups", "fusion", "sampler", "toylm", "ablations", "paths"},
                 "config");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) throw ConfigError("config key 'seed' must be an integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("group_spec")) {
    const json& g = doc["group_spec"];
    const std::string w = "group_spec";
    reject_unknown(g, {"k", "m", "text_tokens", "channels", "d_enc1", "d_enc2", "noise_sigma", "complementary",
                       "signal_scale", "nuisance_scale", "shared_cue"},
                   w);
    read_count(g, "k", c.group_spec.k, w);
    read_count(g, "m", c.group_spec.tokens, w);
    read_count(g, "text_tokens", c.group_spec.text_tokens, w);
    read_count(g, "channels", c.group_spec.channels, w);
    read_count(g, "d_enc1", c.group_spec.d_enc1, w);
    read_count(g, "d_enc2", c.group_spec.d_enc2, w);
    read(g, "noise_sigma", c.group_spec.noise_sigma, w);
    read(g, "complementary", c.group_spec.complementary, w);
    read(g, "signal_scale", c.group_spec.signal_scale, w);
    read(g, "nuisance_scale", c.group_spec.nuisance_scale, w);
    read(g, "shared_cue", c.group_spec.shared_cue, w);
    c.fusion.d_out = c.group_spec.channels;
  }
  if (doc.contains("groups")) {
    reject_unknown(doc["groups"], {"train", "heldout"}, "groups");
    read_count(doc["groups"], "train", c.train_groups, "groups");
    read_count(doc["groups"], "heldout", c.heldout_groups, "groups");
  }
  if (doc.contains("fusion")) {
    reject_unknown(doc["fusion"], {"d_out", "alpha_logit_init"}, "fusion");
    read_count(doc["fusion"], "d_out", c.fusion.d_out, "fusion");
    read(doc["fusion"], "alpha_logit_init", c.fusion.alpha_logit_init, "fusion");
  }
  if (doc.contains("sampler")) {
    const json& s = doc["sampler"];
    const std::string w = "sampler";
    reject_unknown(s, {"temperature", "lr", "steps", "batch", "n_layers", "d_k", "adr_weight", "optimizer",
                       "w_init_scale"},
                   w);
    read(s, "temperature", c.sampler.temperature, w);
    read(s, "lr", c.sampler.lr, w);
    read_count(s, "steps", c.sampler.steps, w);
    read_count(s, "batch", c.sampler.batch, w);
    read_count(s, "n_layers", c.sampler.n_layers, w);
    read_count(s, "d_k", c.sampler.d_k, w);
    read(s, "adr_weight", c.sampler.adr_weight, w);
    read(s, "w_init_scale", c.sampler.w_init_scale, w);
    read_optimizer(s, c.sampler.optimizer, w);
  }
  if (doc.contains("toylm")) {
    const json& t = doc["toylm"];
    const std::string w = "toylm";
    reject_unknown(t, {"vocab", "embed_dim", "key_dim", "adapter_rank", "stages", "stage1_steps", "stage2_steps",
                       "records", "lr", "optimizer"},
                   w);
    read_count(t, "vocab", c.toylm.vocab, w);
    read_count(t, "embed_dim", c.toylm.embed_dim, w);
    read_count(t, "key_dim", c.toylm.key_dim, w);
    read_count(t, "adapter_rank", c.toylm.adapter_rank, w);
    read_count(t, "stages", c.toylm.stages, w);
    read_count(t, "stage1_steps", c.toylm.stage1_steps, w);
    read_count(t, "stage2_steps", c.toylm.stage2_steps, w);
    read_count(t, "records", c.toylm.records, w);
    read(t, "lr", c.toylm.lr, w);
    read_optimizer(t, c.toylm.optimizer, w);
  }
  if (doc.contains("ablations")) {
    const json& a = doc["ablations"];
    const std::string w = "ablations";
    reject_unknown(a, {"visual_enhancement", "redundancy_adaptation", "attention_strategy", "stage2", "site_prompt"},
                   w);
    read(a, "visual_enhancement", c.ablations.visual_enhancement, w);
    read(a, "redundancy_adaptation", c.ablations.redundancy_adaptation, w);
    read(a, "attention_strategy", c.ablations.attention_strategy, w);
    read(a, "stage2", c.ablations.stage2, w);
    read(a, "site_prompt", c.ablations.site_prompt, w);
  }
  if (doc.contains("paths")) {
    reject_unknown(doc["paths"], {"data_dir", "out_dir"}, "paths");
    std::string dir;
    if (doc["paths"].contains("out_dir")) {
      read(doc["paths"], "out_dir", dir, "paths");
      c.paths.out_dir = dir;
    }
    if (doc["paths"].contains("data_dir")) {
      read(doc["paths"], "data_dir", dir, "paths");
      c.paths.data_dir = dir;
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path));
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& g = c.group_spec;
  json doc = {
      {"seed", c.seed},
      {"group_spec",
       {{"k", g.k},
        {"m", g.tokens},
        {"text_tokens", g.text_tokens},
        {"channels", g.channels},
        {"d_enc1", g.d_enc1},
        {"d_enc2", g.d_enc2},
        {"noise_sigma", g.noise_sigma},
        {"complementary", g.complementary},
        {"signal_scale", g.signal_scale},
        {"nuisance_scale", g.nuisance_scale},
        {"shared_cue", g.shared_cue}}},
      {"groups", {{"train", c.train_groups}, {"heldout", c.heldout_groups}}},
      {"fusion", {{"d_out", c.fusion.d_out}, {"alpha_logit_init", c.fusion.alpha_logit_init}}},
      {"sampler",
       {{"temperature", c.sampler.temperature},
        {"lr", c.sampler.lr},
        {"steps", c.sampler.steps},
        {"batch", c.sampler.batch},
        {"n_layers", c.sampler.n_layers},
        {"d_k", c.sampler.d_k},
        {"adr_weight", c.sampler.adr_weight},
        {"optimizer", to_string(c.sampler.optimizer)},
        {"w_init_scale", c.sampler.w_init_scale}}},
      {"toylm",
       {{"vocab", c.toylm.vocab},
        {"embed_dim", c.toylm.embed_dim},
        {"key_dim", c.toylm.key_dim},
        {"adapter_rank", c.toylm.adapter_rank},
        {"stages", c.toylm.stages},
        {"stage1_steps", c.toylm.stage1_steps},
        {"stage2_steps", c.toylm.stage2_steps},
        {"records", c.toylm.records},
        {"lr", c.toylm.lr},
        {"optimizer", to_string(c.toylm.optimizer)}}},
      {"ablations",
       {{"visual_enhancement", c.ablations.visual_enhancement},
        {"redundancy_adaptation", c.ablations.redundancy_adaptation},
        {"attention_strategy", c.ablations.attention_strategy},
        {"stage2", c.ablations.stage2},
        {"site_prompt", c.ablations.site_prompt}}},
  };
  return doc.dump(2) + "\n";
}

}  // namespace mmfuse::cli
