#include "sear/envs.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sear/rng.hpp"

namespace sear::envs {

namespace {

void check_action(const std::vector<double>& action, const EnvSpec& spec) {
  if (action.size() != spec.action_dim) {
    throw std::invalid_argument("step: action has dim " +
                                std::to_string(action.size()) + ", expected " +
                                std::to_string(spec.action_dim));
  }
  for (double a : action) {
    if (!(a >= -1.0 && a <= 1.0)) {
      throw std::invalid_argument("step: action component " +
                                  std::to_string(a) + " outside [-1, 1]");
    }
  }
}

double clip_unit(double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

// --- PointMass -------------------------------------------------------------

PointMass::PointMass(PointMassConfig cfg) : cfg_(cfg) {
  if (!(cfg_.step_scale > 0.0)) {
    throw std::invalid_argument("env.params.step_scale: must be > 0");
  }
  if (!(cfg_.goal_radius > 0.0)) {
    throw std::invalid_argument("env.params.goal_radius: must be > 0");
  }
  if (cfg_.max_steps == 0) {
    throw std::invalid_argument("env.params.max_steps: must be >= 1");
  }
  spec_ = EnvSpec{2, 2, cfg_.max_steps,
                  cfg_.dense ? -2.0 * std::sqrt(2.0) : 0.0,
                  cfg_.dense ? 0.0 : 1.0};
}

std::vector<double> PointMass::reset(std::uint64_t seed) {
  if (cfg_.fixed_start) {
    pos_ = cfg_.start_pos;
  } else {
    Rng rng(mix_seed(seed, 0x9050e57a7));
    pos_ = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  steps_ = 0;
  episode_active_ = true;
  return {pos_[0], pos_[1]};
}

StepResult PointMass::step(const std::vector<double>& action) {
  if (!episode_active_) {
    throw std::logic_error("step: episode already ended; call reset");
  }
  check_action(action, spec_);
  pos_[0] = clip_unit(pos_[0] + cfg_.step_scale * action[0]);
  pos_[1] = clip_unit(pos_[1] + cfg_.step_scale * action[1]);
  const double dx = pos_[0] - cfg_.goal[0];
  const double dy = pos_[1] - cfg_.goal[1];
  const double dist = std::sqrt(dx * dx + dy * dy);

  StepResult res;
  res.next_state = {pos_[0], pos_[1]};
  res.reward = cfg_.dense ? -dist : (dist <= cfg_.goal_radius ? 1.0 : 0.0);
  ++steps_;
  res.terminal = false;
  res.truncated = steps_ >= cfg_.max_steps;
  if (res.truncated) episode_active_ = false;
  return res;
}

bool PointMass::is_success(const std::vector<double>& state) const {
  if (state.size() != 2) {
    throw std::invalid_argument("is_success: state must have dim 2");
  }
  const double dx = state[0] - cfg_.goal[0];
  const double dy = state[1] - cfg_.goal[1];
  return std::sqrt(dx * dx + dy * dy) <= cfg_.goal_radius;
}

std::unique_ptr<Env> PointMass::clone() const {
  return std::make_unique<PointMass>(cfg_);
}

// --- ChainMdp ----------------------------------------------------------------

namespace {
// reward_table[state][move + 1]; state 4 is terminal and never stepped from.
constexpr double kChainRewards[4][3] = {
    {0.05, 0.00, 0.10},
    {0.00, 0.05, 0.20},
    {0.10, 0.00, 0.30},
    {0.00, 0.10, 0.50},
};
}  // namespace

ChainMdp::ChainMdp(ChainConfig cfg) : cfg_(cfg) {
  if (cfg_.horizon == 0) {
    throw std::invalid_argument("env.params.horizon: must be >= 1");
  }
  spec_ = EnvSpec{1, 1, cfg_.horizon, 0.0, 0.5};
}

int ChainMdp::move_of(double action) {
  if (action < -kMoveThreshold) return -1;
  if (action > kMoveThreshold) return 1;
  return 0;
}

double ChainMdp::reward_of(std::size_t state, int move) {
  if (state >= kNumStates - 1) {
    throw std::invalid_argument("reward_of: state 4 is terminal");
  }
  return kChainRewards[state][move + 1];
}

std::size_t ChainMdp::next_of(std::size_t state, int move) {
  const long s = static_cast<long>(state) + move;
  if (s < 0) return 0;
  if (s >= static_cast<long>(kNumStates)) return kNumStates - 1;
  return static_cast<std::size_t>(s);
}

std::vector<double> ChainMdp::reset(std::uint64_t /*seed*/) {
  state_ = kStart;
  steps_ = 0;
  episode_active_ = true;
  return {obs_of(state_)};
}

StepResult ChainMdp::step(const std::vector<double>& action) {
  if (!episode_active_) {
    throw std::logic_error("step: episode already ended; call reset");
  }
  check_action(action, spec_);
  const int move = move_of(action[0]);
  const double reward = reward_of(state_, move);
  state_ = next_of(state_, move);
  ++steps_;

  StepResult res;
  res.next_state = {obs_of(state_)};
  res.reward = reward;
  res.terminal = state_ == kNumStates - 1;
  res.truncated = !res.terminal && steps_ >= cfg_.horizon;
  if (res.terminal || res.truncated) episode_active_ = false;
  return res;
}

bool ChainMdp::is_success(const std::vector<double>& state) const {
  if (state.size() != 1) {
    throw std::invalid_argument("is_success: state must have dim 1");
  }
  return std::fabs(state[0] - 1.0) < 1e-9;
}

std::unique_ptr<Env> ChainMdp::clone() const {
  return std::make_unique<ChainMdp>(cfg_);
}

// --- helpers ---------------------------------------------------------------

bool episode_success(const Env& env, const Episode& episode) {
  if (episode.empty()) {
    throw std::invalid_argument("episode_success: empty episode");
  }
  return env.is_success(episode.back().next_state);
}

void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_episodes_jsonl: cannot open " + path);
  }
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t j = 0; j < episodes[e].size(); ++j) {
      const Transition& t = episodes[e][j];
      nlohmann::json row = {
          {"episode", e},          {"step", j},
          {"state", t.state},      {"action", t.action},
          {"reward", t.reward},    {"next_state", t.next_state},
          {"terminal", t.terminal}, {"truncated", t.truncated},
      };
      out << row.dump() << '\n';
    }
  }
  if (!out) {
    throw std::runtime_error("write_episodes_jsonl: write failed for " + path);
  }
}

std::unique_ptr<Env> make_env(const std::string& name,
                              const nlohmann::json& params) {
  if (!params.is_object() && !params.is_null()) {
    throw std::invalid_argument("env.params: must be an object");
  }
  const nlohmann::json obj =
      params.is_null() ? nlohmann::json::object() : params;

  auto reject_unknown = [&obj](std::initializer_list<const char*> known) {
    for (const auto& [key, _] : obj.items()) {
      bool ok = false;
      for (const char* k : known) ok = ok || key == k;
      if (!ok) {
        throw std::invalid_argument("env.params." + key + ": unknown key");
      }
    }
  };

  if (name == "pointmass") {
    reject_unknown({"step_scale", "goal_radius", "dense", "fixed_start",
                    "max_steps"});
    PointMassConfig cfg;
    try {
      cfg.step_scale = obj.value("step_scale", cfg.step_scale);
      cfg.goal_radius = obj.value("goal_radius", cfg.goal_radius);
      cfg.dense = obj.value("dense", cfg.dense);
      cfg.fixed_start = obj.value("fixed_start", cfg.fixed_start);
      cfg.max_steps = obj.value("max_steps", cfg.max_steps);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("env.params: bad value type (") +
                                  e.what() + ")");
    }
    return std::make_unique<PointMass>(cfg);
  }
  if (name == "chain") {
    reject_unknown({"horizon"});
    ChainConfig cfg;
    try {
      cfg.horizon = obj.value("horizon", cfg.horizon);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("env.params: bad value type (") +
                                  e.what() + ")");
    }
    return std::make_unique<ChainMdp>(cfg);
  }
  throw std::invalid_argument("env.name: unknown environment '" + name + "'");
}

}  // namespace sear::envs
