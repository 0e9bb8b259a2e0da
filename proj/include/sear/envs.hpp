#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace sear::envs {

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t max_steps = 0;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  bool truncated = false;
};

using Episode = std::vector<Transition>;

// Deterministic, seedable environment. A (seed, action sequence) pair fully
// determines the trajectory. Built-in envs never set terminal and truncated
// on the same step.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual const std::string& name() const = 0;
  // Starts a new episode; the initial state is a deterministic function of
  // the seed.
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  // Throws std::logic_error if the episode already ended, and
  // std::invalid_argument if any action component leaves [-1, 1].
  virtual StepResult step(const std::vector<double>& action) = 0;
  virtual bool is_success(const std::vector<double>& state) const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// 2-D point navigating [-1,1]^2 toward a fixed goal: x' = clip(x + delta*a).
// Dense mode rewards -|x' - goal|; sparse mode rewards 1 inside the goal
// radius. Episodes never terminate, only truncate at max_steps, so success
// is judged at the final step. Defaults put the straight-line optimum at
// roughly 23 steps, long enough for chunks up to N=10 to matter at episode
// length 100.
struct PointMassConfig {
  double step_scale = 0.07;
  double goal_radius = 0.15;
  bool dense = true;
  bool fixed_start = true;  // fixed: always start_pos; else uniform [-1,1]^2
  std::array<double, 2> start_pos{-0.9, -0.9};
  std::array<double, 2> goal{0.8, 0.8};
  std::size_t max_steps = 100;
};

class PointMass final : public Env {
 public:
  explicit PointMass(PointMassConfig cfg = {});
  const EnvSpec& spec() const override { return spec_; }
  const std::string& name() const override { return name_; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(const std::vector<double>& action) override;
  bool is_success(const std::vector<double>& state) const override;
  std::unique_ptr<Env> clone() const override;
  const PointMassConfig& config() const { return cfg_; }

 private:
  PointMassConfig cfg_;
  EnvSpec spec_;
  std::string name_ = "pointmass";
  std::array<double, 2> pos_{};
  std::size_t steps_ = 0;
  bool episode_active_ = false;
};

// 1-D five-state chain with a known reward table, sized so exact chunk
// values are computable by exhaustive enumeration. The continuous action is
// discretized into {left, stay, right} at thresholds +-1/3. State s is
// observed as s/2 - 1 in [-1, 1]. State 4 is terminal; episodes otherwise
// truncate at `horizon`. Start state is always 2.
struct ChainConfig {
  std::size_t horizon = 20;
};

class ChainMdp final : public Env {
 public:
  static constexpr std::size_t kNumStates = 5;
  static constexpr std::size_t kStart = 2;
  static constexpr double kMoveThreshold = 1.0 / 3.0;

  explicit ChainMdp(ChainConfig cfg = {});
  const EnvSpec& spec() const override { return spec_; }
  const std::string& name() const override { return name_; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(const std::vector<double>& action) override;
  bool is_success(const std::vector<double>& state) const override;
  std::unique_ptr<Env> clone() const override;
  const ChainConfig& config() const { return cfg_; }

  // Exposed for oracle tests.
  static int move_of(double action);                  // -1 / 0 / +1
  static double reward_of(std::size_t state, int move);
  static std::size_t next_of(std::size_t state, int move);
  static double obs_of(std::size_t state) {
    return static_cast<double>(state) / 2.0 - 1.0;
  }

 private:
  ChainConfig cfg_;
  EnvSpec spec_;
  std::string name_ = "chain";
  std::size_t state_ = kStart;
  std::size_t steps_ = 0;
  bool episode_active_ = false;
};

// True iff the success predicate holds at the episode's final step (not
// "ever succeeded"). Throws std::invalid_argument on an empty episode.
bool episode_success(const Env& env, const Episode& episode);

// One transition per line:
// {"action":[...],"episode":i,"next_state":[...],"reward":r,"state":[...],
//  "step":j,"terminal":b,"truncated":b}
void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes);

// name: "pointmass" or "chain"; unknown names or parameter keys throw
// std::invalid_argument naming the offending "env.params.<key>".
std::unique_ptr<Env> make_env(const std::string& name,
                              const nlohmann::json& params);

}  // namespace sear::envs
