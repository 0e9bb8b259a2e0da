#include "sear/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "sear/algo.hpp"
#include "sear/checkpoint.hpp"
#include "sear/envs.hpp"
#include "sear/nets.hpp"
#include "sear/optim.hpp"
#include "sear/replay.hpp"
#include "sear/rng.hpp"

namespace sear::algo {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string checkpoint_name(std::size_t step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "step_%09zu.ckpt", step);
  return buf;
}

struct PolicyStack {
  std::unique_ptr<nets::Actor> actor;
  TwinCritics online, targets;
};

// One construction path for training and checkpoint restore, so parameter
// order and shapes always agree with the checkpoint name table.
PolicyStack build_policy_stack(const cfg::RunConfig& cfg, std::size_t S,
                               std::size_t A, Rng& init_rng) {
  PolicyStack st;
  nets::ActorConfig acfg;
  acfg.state_dim = S;
  acfg.action_dim = A;
  acfg.chunk = cfg.chunk;
  acfg.width = cfg.actor_width;
  acfg.blocks = cfg.actor_blocks;
  st.actor = std::make_unique<nets::Actor>(acfg, init_rng);

  if (cfg.transformer_critic) {
    nets::TransformerCriticConfig ccfg;
    ccfg.state_dim = S;
    ccfg.action_dim = A;
    ccfg.chunk = cfg.chunk;
    ccfg.width = cfg.critic_width;
    ccfg.blocks = cfg.critic_blocks;
    ccfg.heads = cfg.critic_heads;
    st.online.q1 = std::make_unique<nets::TransformerCritic>(ccfg, init_rng);
    st.online.q2 = std::make_unique<nets::TransformerCritic>(ccfg, init_rng);
  } else {
    nets::MlpCriticConfig ccfg;
    ccfg.state_dim = S;
    ccfg.action_dim = A;
    ccfg.chunk = cfg.chunk;
    ccfg.width = cfg.critic_width;
    ccfg.blocks = cfg.critic_blocks;
    st.online.q1 = std::make_unique<nets::MlpCritic>(ccfg, init_rng);
    st.online.q2 = std::make_unique<nets::MlpCritic>(ccfg, init_rng);
  }
  st.targets = st.online.clone_as_targets();
  return st;
}

std::vector<ckpt::NamedTensor> named_stack(const PolicyStack& st,
                                           const ad::Tensor& log_alpha) {
  std::vector<ckpt::NamedTensor> named = st.actor->named_params("actor");
  for (auto& nt : st.online.q1->named_params("critic1")) named.push_back(nt);
  for (auto& nt : st.online.q2->named_params("critic2")) named.push_back(nt);
  for (auto& nt : st.targets.q1->named_params("target1")) named.push_back(nt);
  for (auto& nt : st.targets.q2->named_params("target2")) named.push_back(nt);
  named.push_back({"log_alpha", log_alpha});
  return named;
}

// Everything a single-seed run owns, bundled so helpers stay small.
struct Trainer {
  const cfg::RunConfig& cfg;
  std::uint64_t seed;
  std::string run_dir;

  std::unique_ptr<envs::Env> env;       // collection
  std::unique_ptr<envs::Env> eval_env;  // evaluation (separate episode state)
  PolicyStack st;
  std::vector<ad::Tensor> online_params, target_params;
  Temperature temp;
  std::unique_ptr<optim::AdamW> critic_opt, actor_opt, alpha_opt;
  std::unique_ptr<replay::ReplayBuffer> buffer;
  std::unique_ptr<Collector> collector;

  Rng target_rng, actor_rng, sample_rng, temp_rng;
  std::uint64_t eval_seed_base;

  // Accumulators for the current metrics window.
  double acc_loss_critic = 0.0, acc_loss_actor = 0.0, acc_entropy = 0.0;
  std::size_t acc_updates = 0, acc_actor_updates = 0;

  std::ofstream csv;
  TrainResult result;

  Trainer(const cfg::RunConfig& c, std::uint64_t s, std::string dir)
      : cfg(c),
        seed(s),
        run_dir(std::move(dir)),
        target_rng(mix_seed(s, 2)),
        actor_rng(mix_seed(s, 3)),
        sample_rng(mix_seed(s, 4)),
        temp_rng(mix_seed(s, 7)),
        eval_seed_base(mix_seed(s, 6)) {}

  void build() {
    fs::create_directories(run_dir + "/checkpoints");
    fs::create_directories(run_dir + "/curves");

    env = envs::make_env(cfg.env_name, cfg.env_params);
    eval_env = envs::make_env(cfg.env_name, cfg.env_params);
    const std::size_t S = env->spec().state_dim;
    const std::size_t A = env->spec().action_dim;

    Rng init_rng(mix_seed(seed, 1));
    st = build_policy_stack(cfg, S, A, init_rng);
    online_params = st.online.params();
    target_params = st.targets.params();

    temp = make_temperature(
        cfg.alpha_init, cfg.auto_target_entropy
                            ? default_target_entropy(cfg.chunk, A)
                            : cfg.target_entropy);

    optim::AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.beta1 = cfg.beta1;
    ocfg.beta2 = cfg.beta2;
    ocfg.weight_decay = cfg.weight_decay;
    critic_opt = std::make_unique<optim::AdamW>(online_params, ocfg);
    actor_opt = std::make_unique<optim::AdamW>(st.actor->params(), ocfg);
    // No weight decay on log_alpha: decaying it would pull alpha toward 1
    // regardless of the entropy error.
    optim::AdamWConfig tcfg = ocfg;
    tcfg.weight_decay = 0.0;
    alpha_opt = std::make_unique<optim::AdamW>(
        std::vector<ad::Tensor>{temp.log_alpha}, tcfg);

    buffer = std::make_unique<replay::ReplayBuffer>(cfg.replay_capacity, S, A);
    AblationSwitches sw;
    sw.multi_horizon = cfg.multi_horizon;
    sw.random_replanning = cfg.random_replanning;
    sw.transformer_critic = cfg.transformer_critic;
    sw.chunk = cfg.chunk;
    sw.eval_receding_horizon = cfg.receding_horizon;
    collector =
        std::make_unique<Collector>(*env, *st.actor, sw, mix_seed(seed, 5));

    // Frozen resolved config; reloading it reproduces this run.
    std::ofstream cfg_out(run_dir + "/config.json", std::ios::binary);
    cfg_out << cfg::to_json(cfg).dump(2) << '\n';

    csv.open(run_dir + "/metrics.csv", std::ios::binary);
    csv << "env_step,loss_critic,loss_actor,alpha,chunk_entropy,"
           "eval_success,eval_return\n";
    csv.flush();

    result.run.task = env->name();
    result.run.seed = seed;
    result.run_dir = run_dir;
  }

  void update_once() {
    replay::ChunkBatch batch =
        buffer->sample_chunk_batch(cfg.batch_size, cfg.chunk, sample_rng);
    const double alpha = temp.alpha();

    TargetBatch tb = compute_targets(batch, st.targets, *st.actor, alpha,
                                     cfg.gamma, target_rng);

    ad::Tensor states =
        ad::Tensor::from_data({batch.batch, batch.state_dim}, batch.states);
    ad::Tensor actions = ad::Tensor::from_data(
        {batch.batch, batch.chunk, batch.action_dim}, batch.actions);

    // 1) critics
    critic_opt->zero_grad();
    ad::Tensor closs =
        ad::add(critic_loss(st.online.q1->forward(states, actions), tb,
                            cfg.multi_horizon),
                critic_loss(st.online.q2->forward(states, actions), tb,
                            cfg.multi_horizon));
    ad::backward(closs);
    critic_opt->step();
    acc_loss_critic += closs.item();

    // 2) actor  3) temperature
    if (cfg.update_actor) {
      actor_opt->zero_grad();
      ActorLossResult al =
          actor_loss(states, *st.actor, st.online, alpha, cfg.gamma, actor_rng);
      ad::backward(al.loss);
      actor_opt->step();
      acc_loss_actor += al.loss.item();
      acc_entropy += -al.mean_sum_log_prob;
      ++acc_actor_updates;
      if (cfg.update_temperature) {
        temperature_update(al.log_probs, temp, *alpha_opt);
      }
    } else if (cfg.update_temperature) {
      // Fresh samples for the temperature step only; no actor gradient.
      ad::NoGradGuard no_grad;
      nets::ChunkDist dist = st.actor->forward(states);
      ad::Tensor noise =
          nets::make_noise(temp_rng, batch.batch, cfg.chunk, batch.action_dim);
      nets::SampledChunk sc = nets::sample_chunk(dist, noise);
      temperature_update(sc.log_probs, temp, *alpha_opt);
    }

    // 4) Polyak target update
    nets::polyak_update(target_params, online_params, cfg.tau);
    ++acc_updates;
  }

  void save_checkpoint(std::size_t step) {
    nlohmann::json meta;
    meta["env_step"] = step;
    meta["seed"] = seed;
    meta["config"] = cfg::to_json(cfg);
    ckpt::save_checkpoint(run_dir + "/checkpoints/" + checkpoint_name(step),
                          named_stack(st, temp.log_alpha), meta);
  }

  void evaluate_and_log(std::size_t step) {
    std::size_t wins = 0;
    double ret_sum = 0.0;
    const std::uint64_t block =
        static_cast<std::uint64_t>(result.rows.size()) * 1000003ULL;
    for (std::size_t e = 0; e < cfg.eval_episodes; ++e) {
      envs::Episode ep = receding_horizon_rollout(
          *eval_env, *st.actor, cfg.receding_horizon,
          mix_seed(eval_seed_base, block + e));
      if (envs::episode_success(*eval_env, ep)) ++wins;
      for (const envs::Transition& t : ep) ret_sum += t.reward;
    }
    MetricsRow row;
    row.env_step = step;
    row.loss_critic = acc_updates ? acc_loss_critic / acc_updates : 0.0;
    row.loss_actor =
        acc_actor_updates ? acc_loss_actor / acc_actor_updates : 0.0;
    row.alpha = temp.alpha();
    row.chunk_entropy =
        acc_actor_updates ? acc_entropy / acc_actor_updates : 0.0;
    row.eval_success = static_cast<double>(wins) / cfg.eval_episodes;
    row.eval_return = ret_sum / cfg.eval_episodes;
    acc_loss_critic = acc_loss_actor = acc_entropy = 0.0;
    acc_updates = acc_actor_updates = 0;

    csv << row.env_step << ',' << fmt(row.loss_critic) << ','
        << fmt(row.loss_actor) << ',' << fmt(row.alpha) << ','
        << fmt(row.chunk_entropy) << ',' << fmt(row.eval_success) << ','
        << fmt(row.eval_return) << '\n';
    csv.flush();

    result.rows.push_back(row);
    result.run.checkpoints.push_back({step, row.eval_success, row.eval_return});
    result.final_success = row.eval_success;
    save_checkpoint(step);
  }

  void run() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t step = 0;
    std::size_t last_eval = 0;
    try {
      while (step < cfg.total_timesteps) {
        collector->set_uniform_random(buffer->total_pushed() <
                                      cfg.warmup_steps);
        Collector::ChunkResult chunk = collector->collect_chunk();
        for (const envs::Transition& tr : chunk.transitions) {
          buffer->push(tr);
          ++step;
          if (buffer->total_pushed() >= cfg.warmup_steps &&
              buffer->size() >= cfg.batch_size) {
            update_once();
          }
          if (step % cfg.eval_every == 0 || step == cfg.total_timesteps) {
            evaluate_and_log(step);
            last_eval = step;
          }
          if (step >= cfg.total_timesteps) break;
        }
      }
      if (last_eval != step) evaluate_and_log(step);
    } catch (const ad::NonFiniteError& e) {
      std::ofstream diag(run_dir + "/abort.txt", std::ios::binary);
      diag << "training aborted at env_step " << step << "\n"
           << "reason: " << e.what() << "\n"
           << "last good checkpoint: "
           << (last_eval ? "checkpoints/" + checkpoint_name(last_eval)
                         : std::string("none"))
           << "\n";
      throw;
    }
    result.steps_completed = step;

    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    // Wallclock lives here, outside metrics.csv, which must stay
    // byte-deterministic across runs.
    std::ofstream timing(run_dir + "/timing.txt", std::ios::binary);
    timing << "env_steps " << step << "\nseconds " << fmt(secs)
           << "\nsteps_per_second " << fmt(step / std::max(secs, 1e-9))
           << "\n";

    metrics::emit_curves({result.run}, run_dir + "/curves");
  }
};

}  // namespace

TrainResult train(const cfg::RunConfig& config, std::uint64_t seed,
                  const std::string& run_dir) {
  Trainer t(config, seed, run_dir);
  t.build();
  t.run();
  return t.result;
}

RestoredRun restore_run(const std::string& checkpoint_path) {
  nlohmann::json meta = ckpt::read_meta(checkpoint_path);
  if (!meta.contains("config")) {
    throw std::runtime_error(checkpoint_path +
                             ": checkpoint meta carries no config");
  }
  RestoredRun r;
  r.config = cfg::load_config(meta.at("config"));
  r.seed = meta.value("seed", std::uint64_t{0});
  r.env_step = meta.value("env_step", std::size_t{0});
  r.env = envs::make_env(r.config.env_name, r.config.env_params);

  Rng scratch_rng(0);  // values are overwritten by the load below
  PolicyStack st = build_policy_stack(r.config, r.env->spec().state_dim,
                                      r.env->spec().action_dim, scratch_rng);
  ad::Tensor log_alpha = ad::Tensor::scalar(0.0, /*requires_grad=*/true);
  std::vector<ckpt::NamedTensor> named = named_stack(st, log_alpha);
  ckpt::load_checkpoint(checkpoint_path, named);

  r.actor = std::move(st.actor);
  r.online = std::move(st.online);
  r.targets = std::move(st.targets);
  r.log_alpha = log_alpha.item();
  return r;
}

}  // namespace sear::algo
