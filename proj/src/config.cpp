#include "sear/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "sear/envs.hpp"

namespace sear::cfg {

namespace {

using nlohmann::json;

// Tracks which keys of one JSON object were consumed so leftovers can be
// reported as unknown, with full dotted paths.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  const json& at(const std::string& key) { return obj_.at(key); }

  std::string path_of(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(path_of(key) + ": expected a number");
    return v.get<double>();
  }

  std::size_t size_field(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_integer() || v.get<double>() < 0) {
      throw ConfigError(path_of(key) + ": expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(path_of(key) + ": expected a boolean");
    return v.get<bool>();
  }

  std::string str(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(path_of(key) + ": expected a string");
    return v.get<std::string>();
  }

  // Call after consuming every known key.
  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown config key: " + path_of(it.key()));
      }
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

RunConfig load_config(const json& doc) {
  RunConfig c;
  Section root(doc, "");

  if (root.has("env")) {
    Section env(root.at("env"), "env");
    c.env_name = env.str("name", c.env_name);
    if (env.has("params")) {
      const json& p = env.at("params");
      if (!p.is_object()) throw ConfigError("env.params: expected an object");
      c.env_params = p;
    }
    env.reject_unknown();
  }
  // Constructing the env validates both the name and every param key/value;
  // its exceptions already carry "env."-prefixed paths.
  try {
    (void)envs::make_env(c.env_name, c.env_params);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  if (root.has("algo")) {
    Section algo(root.at("algo"), "algo");
    c.chunk = algo.size_field("chunk", c.chunk);
    c.receding_horizon = algo.size_field("receding_horizon", c.receding_horizon);
    c.multi_horizon = algo.boolean("multi_horizon", c.multi_horizon);
    c.random_replanning =
        algo.boolean("random_replanning", c.random_replanning);
    c.transformer_critic =
        algo.boolean("transformer_critic", c.transformer_critic);
    c.total_timesteps = algo.size_field("total_timesteps", c.total_timesteps);
    c.batch_size = algo.size_field("batch_size", c.batch_size);
    c.warmup_steps = algo.size_field("warmup_steps", c.warmup_steps);
    c.replay_capacity = algo.size_field("replay_capacity", c.replay_capacity);
    c.gamma = algo.number("gamma", c.gamma);
    c.tau = algo.number("tau", c.tau);
    c.lr = algo.number("lr", c.lr);
    c.weight_decay = algo.number("weight_decay", c.weight_decay);
    c.beta1 = algo.number("beta1", c.beta1);
    c.beta2 = algo.number("beta2", c.beta2);
    c.alpha_init = algo.number("alpha_init", c.alpha_init);
    c.update_actor = algo.boolean("update_actor", c.update_actor);
    c.update_temperature =
        algo.boolean("update_temperature", c.update_temperature);
    if (algo.has("target_entropy")) {
      const json& v = algo.at("target_entropy");
      if (v.is_null()) {
        c.auto_target_entropy = true;
      } else if (v.is_number()) {
        c.auto_target_entropy = false;
        c.target_entropy = v.get<double>();
      } else {
        throw ConfigError("algo.target_entropy: expected a number or null");
      }
    }
    if (algo.has("seeds")) {
      const json& v = algo.at("seeds");
      if (!v.is_array() || v.empty()) {
        throw ConfigError("algo.seeds: expected a non-empty array");
      }
      c.seeds.clear();
      for (const json& s : v) {
        if (!s.is_number_integer() || s.get<double>() < 0) {
          throw ConfigError("algo.seeds: entries must be non-negative integers");
        }
        c.seeds.push_back(s.get<std::uint64_t>());
      }
    }
    algo.reject_unknown();
  }

  if (root.has("nets")) {
    Section nets(root.at("nets"), "nets");
    c.actor_width = nets.size_field("actor_width", c.actor_width);
    c.actor_blocks = nets.size_field("actor_blocks", c.actor_blocks);
    c.critic_width = nets.size_field("critic_width", c.critic_width);
    c.critic_blocks = nets.size_field("critic_blocks", c.critic_blocks);
    c.critic_heads = nets.size_field("critic_heads", c.critic_heads);
    c.num_bins = nets.size_field("num_bins", c.num_bins);
    if (nets.has("value_range")) {
      const json& v = nets.at("value_range");
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() ||
          !v[1].is_number()) {
        throw ConfigError("nets.value_range: expected [low, high]");
      }
      c.value_range = {v[0].get<double>(), v[1].get<double>()};
    }
    nets.reject_unknown();
  }

  if (root.has("eval")) {
    Section ev(root.at("eval"), "eval");
    c.eval_every = ev.size_field("every", c.eval_every);
    c.eval_episodes = ev.size_field("episodes", c.eval_episodes);
    ev.reject_unknown();
  }

  if (root.has("out")) {
    Section out(root.at("out"), "out");
    c.out_dir = out.str("dir", c.out_dir);
    c.run_name = out.str("name", c.run_name);
    out.reject_unknown();
  }

  root.reject_unknown();

  // Range validation with exact field paths.
  require(c.chunk >= 1, "algo.chunk: must be >= 1");
  require(c.receding_horizon >= 1 && c.receding_horizon <= c.chunk,
          "algo.receding_horizon: must satisfy 1 <= k <= algo.chunk");
  require(c.total_timesteps >= 1, "algo.total_timesteps: must be >= 1");
  require(c.batch_size >= 1, "algo.batch_size: must be >= 1");
  require(c.replay_capacity >= c.batch_size,
          "algo.replay_capacity: must be >= algo.batch_size");
  require(c.gamma >= 0.0 && c.gamma < 1.0, "algo.gamma: must lie in [0, 1)");
  require(c.tau >= 0.0 && c.tau <= 1.0, "algo.tau: must lie in [0, 1]");
  require(c.lr > 0.0 && std::isfinite(c.lr), "algo.lr: must be > 0");
  require(c.weight_decay >= 0.0 && std::isfinite(c.weight_decay),
          "algo.weight_decay: must be >= 0");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, "algo.beta1: must lie in [0, 1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, "algo.beta2: must lie in [0, 1)");
  require(c.alpha_init > 0.0 && std::isfinite(c.alpha_init),
          "algo.alpha_init: must be > 0");
  require(std::isfinite(c.target_entropy),
          "algo.target_entropy: must be finite");
  require(c.actor_width >= 1, "nets.actor_width: must be >= 1");
  require(c.actor_blocks >= 1, "nets.actor_blocks: must be >= 1");
  require(c.critic_width >= 1, "nets.critic_width: must be >= 1");
  require(c.critic_blocks >= 1, "nets.critic_blocks: must be >= 1");
  require(c.critic_heads >= 1, "nets.critic_heads: must be >= 1");
  if (c.transformer_critic) {
    require(c.critic_width % c.critic_heads == 0,
            "nets.critic_heads: must divide nets.critic_width");
  }
  require(c.num_bins >= 2, "nets.num_bins: must be >= 2");
  require(c.value_range[0] < c.value_range[1],
          "nets.value_range: low must be < high");
  require(c.eval_every >= 1, "eval.every: must be >= 1");
  require(c.eval_episodes >= 1, "eval.episodes: must be >= 1");
  require(!c.out_dir.empty(), "out.dir: must be non-empty");
  require(!c.run_name.empty(), "out.name: must be non-empty");

  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return load_config(doc);
}

json to_json(const RunConfig& c) {
  json doc;
  doc["env"] = {{"name", c.env_name}, {"params", c.env_params}};
  doc["algo"] = {
      {"chunk", c.chunk},
      {"receding_horizon", c.receding_horizon},
      {"multi_horizon", c.multi_horizon},
      {"random_replanning", c.random_replanning},
      {"transformer_critic", c.transformer_critic},
      {"total_timesteps", c.total_timesteps},
      {"batch_size", c.batch_size},
      {"warmup_steps", c.warmup_steps},
      {"replay_capacity", c.replay_capacity},
      {"gamma", c.gamma},
      {"tau", c.tau},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"alpha_init", c.alpha_init},
      {"update_actor", c.update_actor},
      {"update_temperature", c.update_temperature},
      {"target_entropy",
       c.auto_target_entropy ? json(nullptr) : json(c.target_entropy)},
      {"seeds", c.seeds},
  };
  doc["nets"] = {
      {"actor_width", c.actor_width},
      {"actor_blocks", c.actor_blocks},
      {"critic_width", c.critic_width},
      {"critic_blocks", c.critic_blocks},
      {"critic_heads", c.critic_heads},
      {"num_bins", c.num_bins},
      {"value_range", {c.value_range[0], c.value_range[1]}},
  };
  doc["eval"] = {{"every", c.eval_every}, {"episodes", c.eval_episodes}};
  doc["out"] = {{"dir", c.out_dir}, {"name", c.run_name}};
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like dotted.path=value, got: " +
                      assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // not valid JSON: treat as a plain string
  }

  json* cur = &doc;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(
        begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) {
      throw ConfigError("override path has an empty segment: " + path);
    }
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    if (!cur->is_object()) {
      throw ConfigError("override path crosses a non-object value: " + path);
    }
    begin = dot + 1;
  }
}

}  // namespace sear::cfg
