#include "sear/replay.hpp"

#include <cstring>
#include <stdexcept>

namespace sear::replay {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim,
                           std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity_ == 0) {
    throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  }
  if (state_dim_ == 0 || action_dim_ == 0) {
    throw std::invalid_argument("ReplayBuffer: dims must be >= 1");
  }
  states_.resize(capacity_ * state_dim_);
  actions_.resize(capacity_ * action_dim_);
  rewards_.resize(capacity_);
  next_states_.resize(capacity_ * state_dim_);
  terminal_.resize(capacity_);
  truncated_.resize(capacity_);
  episode_id_.resize(capacity_);
}

void ReplayBuffer::push(const envs::Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_) {
    throw std::invalid_argument("ReplayBuffer::push: bad state dim");
  }
  if (t.action.size() != action_dim_) {
    throw std::invalid_argument("ReplayBuffer::push: bad action dim");
  }
  const std::size_t slot = total_ % capacity_;
  std::memcpy(states_.data() + slot * state_dim_, t.state.data(),
              state_dim_ * sizeof(double));
  std::memcpy(actions_.data() + slot * action_dim_, t.action.data(),
              action_dim_ * sizeof(double));
  rewards_[slot] = t.reward;
  std::memcpy(next_states_.data() + slot * state_dim_, t.next_state.data(),
              state_dim_ * sizeof(double));
  terminal_[slot] = t.terminal ? 1 : 0;
  truncated_[slot] = t.truncated ? 1 : 0;
  episode_id_[slot] = episode_counter_;
  if (t.terminal || t.truncated) ++episode_counter_;
  ++total_;
  if (size_ < capacity_) ++size_;
}

std::size_t ReplayBuffer::slot_of(std::size_t logical_index) const {
  if (logical_index >= size_) {
    throw std::out_of_range("ReplayBuffer: logical index out of range");
  }
  if (total_ <= capacity_) return logical_index;
  return (total_ + logical_index) % capacity_;
}

envs::Transition ReplayBuffer::transition_at(std::size_t logical_index) const {
  const std::size_t s = slot_of(logical_index);
  envs::Transition t;
  t.state.assign(states_.begin() + s * state_dim_,
                 states_.begin() + (s + 1) * state_dim_);
  t.action.assign(actions_.begin() + s * action_dim_,
                  actions_.begin() + (s + 1) * action_dim_);
  t.reward = rewards_[s];
  t.next_state.assign(next_states_.begin() + s * state_dim_,
                      next_states_.begin() + (s + 1) * state_dim_);
  t.terminal = terminal_[s] != 0;
  t.truncated = truncated_[s] != 0;
  return t;
}

std::uint64_t ReplayBuffer::episode_id_at(std::size_t logical_index) const {
  return episode_id_[slot_of(logical_index)];
}

void ReplayBuffer::fill_row(std::size_t start_logical, std::size_t chunk,
                            std::size_t row, ChunkBatch& out) const {
  const std::size_t s0 = slot_of(start_logical);
  std::memcpy(out.states.data() + row * state_dim_,
              states_.data() + s0 * state_dim_, state_dim_ * sizeof(double));
  const std::uint64_t episode = episode_id_[s0];

  bool alive = true;
  bool terminal_seen = false;
  for (std::size_t i = 0; i < chunk; ++i) {
    const std::size_t logical = start_logical + i;
    if (alive && logical < size_) {
      const std::size_t s = slot_of(logical);
      if (episode_id_[s] != episode) alive = false;
    } else {
      alive = false;
    }
    const std::size_t vi = row * chunk + i;
    if (alive) {
      const std::size_t s = slot_of(logical);
      out.valid[vi] = 1;
      std::memcpy(out.actions.data() + (row * chunk + i) * action_dim_,
                  actions_.data() + s * action_dim_,
                  action_dim_ * sizeof(double));
      out.rewards[vi] = rewards_[s];
      std::memcpy(out.next_states.data() + (row * chunk + i) * state_dim_,
                  next_states_.data() + s * state_dim_,
                  state_dim_ * sizeof(double));
      if (terminal_[s]) {
        terminal_seen = true;
        alive = false;  // nothing of this episode exists past a terminal step
      }
    }
    out.terminal_within[vi] = terminal_seen ? 1 : 0;
  }
}

ChunkBatch ReplayBuffer::sample_chunk_batch(std::size_t batch_size,
                                            std::size_t chunk,
                                            Rng& rng) const {
  if (size_ == 0) {
    throw std::logic_error("sample_chunk_batch: empty buffer");
  }
  if (batch_size == 0 || chunk == 0) {
    throw std::invalid_argument(
        "sample_chunk_batch: batch_size and chunk must be >= 1");
  }
  ChunkBatch out;
  out.batch = batch_size;
  out.chunk = chunk;
  out.state_dim = state_dim_;
  out.action_dim = action_dim_;
  out.states.assign(batch_size * state_dim_, 0.0);
  out.actions.assign(batch_size * chunk * action_dim_, 0.0);
  out.rewards.assign(batch_size * chunk, 0.0);
  out.next_states.assign(batch_size * chunk * state_dim_, 0.0);
  out.valid.assign(batch_size * chunk, 0);
  out.terminal_within.assign(batch_size * chunk, 0);

  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform_index(size_));
    fill_row(start, chunk, b, out);
  }
  return out;
}

ChunkBatch ReplayBuffer::window(std::size_t start_logical,
                                std::size_t chunk) const {
  if (start_logical >= size_) {
    throw std::out_of_range("window: start index past stored size");
  }
  if (chunk == 0) throw std::invalid_argument("window: chunk must be >= 1");
  ChunkBatch out;
  out.batch = 1;
  out.chunk = chunk;
  out.state_dim = state_dim_;
  out.action_dim = action_dim_;
  out.states.assign(state_dim_, 0.0);
  out.actions.assign(chunk * action_dim_, 0.0);
  out.rewards.assign(chunk, 0.0);
  out.next_states.assign(chunk * state_dim_, 0.0);
  out.valid.assign(chunk, 0);
  out.terminal_within.assign(chunk, 0);
  fill_row(start_logical, chunk, 0, out);
  return out;
}

void ReplayBuffer::save_jsonl(const std::string& path) const {
  std::vector<envs::Episode> episodes;
  for (std::size_t l = 0; l < size_; ++l) {
    const std::size_t s = slot_of(l);
    if (episodes.empty() ||
        (l > 0 && episode_id_[slot_of(l - 1)] != episode_id_[s])) {
      episodes.emplace_back();
    }
    episodes.back().push_back(transition_at(l));
  }
  envs::write_episodes_jsonl(path, episodes);
}

}  // namespace sear::replay
