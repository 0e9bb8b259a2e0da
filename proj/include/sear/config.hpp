#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace sear::cfg {

// Raised for any config problem; the message always starts with the exact
// dotted field path ("algo.gamma: ...", "unknown config key: env.nam").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full experiment configuration. Defaults are the reference hyperparameters:
// 1e6 total steps, batch 256, gamma 0.99, tau 0.05, lr 3e-4, weight decay
// 1e-4, Adam betas (0.9, 0.999), chunk 10 with receding horizon 5,
// transformer critic width 512 / 2 blocks / 16 heads, actor width 512 /
// 1 block, target entropy -(N * action_dim).
//
// num_bins / value_range describe a discretized-value head variant; they are
// recorded in the config for forward compatibility but unused by training
// (the critics regress scalar values).
struct RunConfig {
  // env
  std::string env_name = "pointmass";
  nlohmann::json env_params = nlohmann::json::object();

  // algo
  std::size_t chunk = 10;              // N
  std::size_t receding_horizon = 5;    // k used at evaluation time
  bool multi_horizon = true;
  bool random_replanning = true;
  bool transformer_critic = true;
  std::size_t total_timesteps = 1000000;
  std::size_t batch_size = 256;
  std::size_t warmup_steps = 1000;     // uniform-random action steps before
                                       // any gradient update
  std::size_t replay_capacity = 1000000;
  double gamma = 0.99;
  double tau = 0.05;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double alpha_init = 1.0;
  bool update_actor = true;        // off: critic-only training (oracle runs)
  bool update_temperature = true;  // off: alpha stays at alpha_init
  bool auto_target_entropy = true;  // true: -(N * action_dim)
  double target_entropy = 0.0;      // used when auto_target_entropy == false
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  // nets
  std::size_t actor_width = 512;
  std::size_t actor_blocks = 1;
  std::size_t critic_width = 512;
  std::size_t critic_blocks = 2;
  std::size_t critic_heads = 16;
  std::size_t num_bins = 101;                    // recorded, unused
  std::array<double, 2> value_range{0.0, 1000.0};  // recorded, unused

  // eval
  std::size_t eval_every = 10000;
  std::size_t eval_episodes = 20;

  // out
  std::string out_dir = "runs";
  std::string run_name = "run";
};

// Parses and fully validates a config document. Resolution is total: any
// field may be omitted (default applies); unknown keys and out-of-range or
// mistyped values are rejected with the exact dotted field path.
RunConfig load_config(const nlohmann::json& doc);

// Reads the file, then load_config. Missing/unreadable file or invalid JSON
// throws ConfigError naming the path.
RunConfig load_config_file(const std::string& path);

// Canonical serialization; load_config(to_json(c)) reproduces c exactly.
nlohmann::json to_json(const RunConfig& c);

// Applies "dotted.path=value" overrides onto a JSON document (creating
// intermediate objects). Values parse as JSON when possible, else as a raw
// string; load_config then validates the result. An override without '='
// throws ConfigError.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace sear::cfg
