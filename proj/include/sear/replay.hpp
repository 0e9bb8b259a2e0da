#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sear/envs.hpp"
#include "sear/rng.hpp"

namespace sear::replay {

// A batch of chunk windows re-sliced from stored transitions. All buffers
// are row-major.
//
// For row b and in-chunk step i (0-based):
//   valid[b][i]           step t+i exists within the starting episode
//   terminal_within[b][i]  a terminal transition occurred at or before step i
//   rewards[b][i]          reward of step t+i (zero where invalid)
//   next_states[b][i]      s_{t+i+1}, the bootstrap state for horizon i+1
//                          (zeros where invalid)
// valid is prefix-closed per row; terminal_within stays raised once set.
// The bootstrap state of a terminal-ending horizon must be ignored
// downstream (its bootstrap term is zeroed by the target computation).
struct ChunkBatch {
  std::size_t batch = 0, chunk = 0, state_dim = 0, action_dim = 0;
  std::vector<double> states;                 // [B, state_dim]
  std::vector<double> actions;                // [B, N, action_dim]
  std::vector<double> rewards;                // [B, N]
  std::vector<double> next_states;            // [B, N, state_dim]
  std::vector<unsigned char> valid;           // [B, N]
  std::vector<unsigned char> terminal_within; // [B, N]
};

// FIFO ring buffer of transitions with per-slot episode ids, so chunk
// windows never mix two episodes: a window stops (mask-wise) at the first
// slot belonging to a different episode.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim,
               std::size_t action_dim);

  void push(const envs::Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_pushed() const { return total_; }

  // Draws batch_size windows of length N. Start indices are uniform over
  // all stored transitions (every stored transition has >= 1 valid step).
  // Throws std::logic_error on an empty buffer.
  ChunkBatch sample_chunk_batch(std::size_t batch_size, std::size_t chunk,
                                Rng& rng) const;

  // Snapshot of the stored transitions (oldest first) in the JSONL episode
  // format; episode indices restart from 0 within the snapshot.
  void save_jsonl(const std::string& path) const;

  // Test hooks: logical index 0 = oldest stored transition.
  envs::Transition transition_at(std::size_t logical_index) const;
  std::uint64_t episode_id_at(std::size_t logical_index) const;

  // Test hook: the chunk window starting at one logical index, as a
  // single-row batch (exactly what sampling that start would produce).
  ChunkBatch window(std::size_t start_logical, std::size_t chunk) const;

 private:
  std::size_t slot_of(std::size_t logical_index) const;
  void fill_row(std::size_t start_logical, std::size_t chunk, std::size_t row,
                ChunkBatch& out) const;

  std::size_t capacity_, state_dim_, action_dim_;
  std::size_t size_ = 0;
  std::size_t total_ = 0;
  std::uint64_t episode_counter_ = 0;

  // Structure-of-arrays storage.
  std::vector<double> states_;       // [capacity, state_dim]
  std::vector<double> actions_;      // [capacity, action_dim]
  std::vector<double> rewards_;      // [capacity]
  std::vector<double> next_states_;  // [capacity, state_dim]
  std::vector<unsigned char> terminal_;
  std::vector<unsigned char> truncated_;
  std::vector<std::uint64_t> episode_id_;
};

}  // namespace sear::replay
