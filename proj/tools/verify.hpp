#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sear/nets.hpp"
#include "sear/rng.hpp"
#include "sear/tensor.hpp"

namespace sear::tools {

// Runs the fast built-in check suite (gradient fidelity, attention
// causality, single-step reduction, chain-MDP critic oracle, log-prob
// quadrature, IQM/bootstrap oracle, replay window masking), printing one
// PASS/FAIL line per check. Returns 0 if every check passed, 1 otherwise.
int run_verify();

// --- reusable oracles, shared with the acceptance suite --------------------

// Central-difference comparison of d(loss)/d(probe) against the analytic
// gradient, probing up to max_coords coordinates of the probe tensor.
// loss_fn must be repeatable (same value on every call). Returns the max
// relative error over the probed coordinates.
double param_grad_error(const std::function<ad::Tensor()>& loss_fn,
                        const std::vector<ad::Tensor>& all_params,
                        ad::Tensor probe, double eps, std::size_t max_coords,
                        Rng& pick);

// Exact state values and chunk Q-values of the 5-state chain task under a
// frozen chunk policy, by full enumeration of move sequences. Independent
// of the critic implementation: uses only the actor's Gaussian parameters
// and the chain's public dynamics table.
struct ChainOracle {
  std::size_t chunk;
  double gamma;
  // move_prob[s][i][m+1]: P(action index i drawn at state s discretizes to
  // move m).
  std::vector<std::array<std::array<double, 3>, 8>> move_prob;
  std::array<double, 5> v{};

  ChainOracle(const nets::Actor& actor, std::size_t chunk_, double gamma_);

  // One application of the chunk Bellman operator at state s.
  double backup(std::size_t s, const std::array<double, 5>& vin) const;

  void solve_values();

  // Exact Q^(n)(s, moves[0..n-1]); valid_horizons reports how many horizons
  // are trainable (termination at step t caps it at t+1).
  double q_exact(std::size_t s, const std::vector<int>& moves, std::size_t n,
                 std::size_t* valid_horizons = nullptr) const;
};

// Critic-only training on the chain task under a frozen random actor;
// returns the max absolute error of the learned Q^(n) (over every state,
// every move sequence, every trainable horizon n <= chunk) against the
// exact enumeration oracle, probing bin-center actions.
double chain_critic_error(std::size_t chunk, std::size_t collect_steps,
                          std::size_t updates, std::size_t batch,
                          std::size_t width, std::size_t heads, double lr,
                          double tau, double gamma, std::uint64_t seed);

}  // namespace sear::tools
