// Replay buffer tests: chunk-window masks, episode isolation, FIFO eviction,
// uniform start sampling, and the JSONL snapshot.
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "sear/envs.hpp"
#include "sear/replay.hpp"
#include "sear/rng.hpp"

using namespace sear;

namespace {

// Scalar-state, scalar-action transition: state t, next_state t+1.
envs::Transition tr(double t, bool terminal = false, bool truncated = false) {
  envs::Transition out;
  out.state = {t};
  out.action = {0.1 * t};
  out.reward = 10.0 * t;
  out.next_state = {t + 1.0};
  out.terminal = terminal;
  out.truncated = truncated;
  return out;
}

// A 12-step buffer holding one episode, optionally terminal at step
// `terminal_at` (the episode then restarts and runs to step 11).
replay::ReplayBuffer make_buffer(std::size_t steps, long terminal_at) {
  replay::ReplayBuffer buf(64, 1, 1);
  for (std::size_t t = 0; t < steps; ++t) {
    buf.push(tr(static_cast<double>(t),
                terminal_at >= 0 && t == static_cast<std::size_t>(terminal_at)));
  }
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("push/size/eviction bookkeeping and transition round-trip") {
  replay::ReplayBuffer buf(8, 1, 1);
  CHECK(buf.capacity() == 8);
  CHECK(buf.size() == 0);

  for (std::size_t t = 0; t < 12; ++t) buf.push(tr(static_cast<double>(t)));
  CHECK(buf.size() == 8);
  CHECK(buf.total_pushed() == 12);

  // Logical index 0 is the oldest survivor: pushed step 4.
  for (std::size_t l = 0; l < 8; ++l) {
    const envs::Transition got = buf.transition_at(l);
    const double t = static_cast<double>(l + 4);
    CHECK(got.state == std::vector<double>{t});
    CHECK(got.action == std::vector<double>{0.1 * t});
    CHECK(got.reward == 10.0 * t);
    CHECK(got.next_state == std::vector<double>{t + 1.0});
    CHECK_FALSE(got.terminal);
    CHECK_FALSE(got.truncated);
  }
  CHECK_THROWS_AS((void)buf.transition_at(8), std::out_of_range);
}

TEST_CASE("constructor and push validate their arguments") {
  CHECK_THROWS_AS(replay::ReplayBuffer(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(replay::ReplayBuffer(4, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(replay::ReplayBuffer(4, 1, 0), std::invalid_argument);

  replay::ReplayBuffer buf(4, 2, 1);
  envs::Transition bad = tr(0.0);  // state_dim 1, buffer expects 2
  CHECK_THROWS_AS(buf.push(bad), std::invalid_argument);

  Rng rng(1);
  CHECK_THROWS_AS((void)buf.sample_chunk_batch(4, 2, rng), std::logic_error);
}

TEST_CASE("chunk window truncates at the end of stored data") {
  // One 12-step episode, no terminal. Every start is sampleable; a window
  // starting at step 10 has only steps 10 and 11.
  replay::ReplayBuffer buf = make_buffer(12, -1);
  for (std::size_t start = 0; start < 12; ++start) {
    const replay::ChunkBatch w = buf.window(start, 4);
    CHECK(w.valid[0] == 1);
  }

  const replay::ChunkBatch w = buf.window(10, 4);
  CHECK(w.valid == std::vector<unsigned char>{1, 1, 0, 0});
  CHECK(w.terminal_within == std::vector<unsigned char>{0, 0, 0, 0});
  CHECK(w.states == std::vector<double>{10.0});
  CHECK(w.rewards == std::vector<double>{100.0, 110.0, 0.0, 0.0});
  CHECK(w.actions == std::vector<double>{1.0, 1.1, 0.0, 0.0});
  CHECK(w.next_states == std::vector<double>{11.0, 12.0, 0.0, 0.0});
}

TEST_CASE("terminal step stays in the window and raises terminal_within") {
  // Terminal at step 5: the window starting at step 3 keeps steps 3, 4 and
  // the terminal step 5, then stops; terminal_within stays raised.
  replay::ReplayBuffer buf = make_buffer(12, 5);
  const replay::ChunkBatch w = buf.window(3, 4);
  CHECK(w.valid == std::vector<unsigned char>{1, 1, 1, 0});
  CHECK(w.terminal_within == std::vector<unsigned char>{0, 0, 1, 1});
  CHECK(w.rewards == std::vector<double>{30.0, 40.0, 50.0, 0.0});
  CHECK(w.next_states == std::vector<double>{4.0, 5.0, 6.0, 0.0});

  // Starting exactly at the terminal step: one valid step, flagged.
  const replay::ChunkBatch wt = buf.window(5, 4);
  CHECK(wt.valid == std::vector<unsigned char>{1, 0, 0, 0});
  CHECK(wt.terminal_within == std::vector<unsigned char>{1, 1, 1, 1});

  // Starting just after the terminal (a fresh episode) is unaffected.
  const replay::ChunkBatch wn = buf.window(6, 4);
  CHECK(wn.valid == std::vector<unsigned char>{1, 1, 1, 1});
  CHECK(wn.terminal_within == std::vector<unsigned char>{0, 0, 0, 0});
}

TEST_CASE("windows never cross an episode boundary") {
  // Episodes: [0..3] truncated, [4..6] terminal, [7..11] running.
  replay::ReplayBuffer buf(64, 1, 1);
  for (std::size_t t = 0; t < 12; ++t) {
    buf.push(tr(static_cast<double>(t), /*terminal=*/t == 6,
                /*truncated=*/t == 3));
  }
  CHECK(buf.episode_id_at(0) == buf.episode_id_at(3));
  CHECK(buf.episode_id_at(3) != buf.episode_id_at(4));
  CHECK(buf.episode_id_at(6) != buf.episode_id_at(7));

  for (std::size_t start = 0; start < 12; ++start) {
    const replay::ChunkBatch w = buf.window(start, 4);
    bool prev_valid = true;
    for (std::size_t i = 0; i < 4; ++i) {
      // valid is prefix-closed.
      if (w.valid[i]) CHECK(prev_valid);
      prev_valid = w.valid[i] != 0;
      if (!w.valid[i]) {
        CHECK(w.rewards[i] == 0.0);
        CHECK(w.actions[i] == 0.0);
        CHECK(w.next_states[i] == 0.0);
        continue;
      }
      // A valid step always belongs to the starting episode.
      CHECK(buf.episode_id_at(start + i) == buf.episode_id_at(start));
      // terminal_within raised exactly from the first terminal step on.
      const bool term_by_now = start + i >= 6 && start <= 6 && start >= 4;
      CHECK((w.terminal_within[i] != 0) == term_by_now);
    }
    // Once raised, terminal_within stays raised to the end of the row.
    for (std::size_t i = 1; i < 4; ++i) {
      if (w.terminal_within[i - 1]) CHECK(w.terminal_within[i]);
    }
    // Truncation ends the window but never raises terminal_within.
    if (start <= 3) {
      for (std::size_t i = 0; i < 4; ++i) CHECK(w.terminal_within[i] == 0);
    }
  }
}

TEST_CASE("windows respect episode boundaries across ring wraparound") {
  // Capacity 6; two 4-step episodes. After 8 pushes the oldest two steps
  // are evicted and the ring seam sits inside episode 1.
  replay::ReplayBuffer buf(6, 1, 1);
  for (std::size_t t = 0; t < 4; ++t) buf.push(tr(static_cast<double>(t), t == 3));
  for (std::size_t t = 0; t < 4; ++t)
    buf.push(tr(static_cast<double>(10 + t), t == 3));
  CHECK(buf.size() == 6);

  // Logical 0..1 = episode 0 steps 2, 3; logical 2..5 = episode 1.
  CHECK(buf.transition_at(0).state == std::vector<double>{2.0});
  CHECK(buf.transition_at(2).state == std::vector<double>{10.0});

  const replay::ChunkBatch w0 = buf.window(0, 4);
  CHECK(w0.valid == std::vector<unsigned char>{1, 1, 0, 0});
  CHECK(w0.terminal_within == std::vector<unsigned char>{0, 1, 1, 1});

  const replay::ChunkBatch w2 = buf.window(2, 4);
  CHECK(w2.valid == std::vector<unsigned char>{1, 1, 1, 1});
  CHECK(w2.states == std::vector<double>{10.0});
  CHECK(w2.rewards == std::vector<double>{100.0, 110.0, 120.0, 130.0});
}

TEST_CASE("sampling is uniform over stored starts and deterministic") {
  replay::ReplayBuffer buf = make_buffer(100, -1);

  Rng rng(97);
  const std::size_t draws = 100000;
  const replay::ChunkBatch batch = buf.sample_chunk_batch(draws, 4, rng);
  CHECK(batch.batch == draws);
  CHECK(batch.chunk == 4);

  // The sampled start is recoverable from the (unique) stored state value.
  std::vector<std::size_t> hist(100, 0);
  for (std::size_t b = 0; b < draws; ++b) {
    const double s = batch.states[b];
    REQUIRE(s >= 0.0);
    REQUIRE(s < 100.0);
    ++hist[static_cast<std::size_t>(s)];
  }
  // Chi-squared against uniform: 99 dof, mean 99, sd ~14.07; 5 sigma.
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / 100.0;
  for (std::size_t c = 0; c < 100; ++c) {
    const double d = static_cast<double>(hist[c]) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 170.0);

  // Each sampled row equals the window() of its recovered start.
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t start = static_cast<std::size_t>(batch.states[b]);
    const replay::ChunkBatch w = buf.window(start, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(batch.valid[b * 4 + i] == w.valid[i]);
      CHECK(batch.rewards[b * 4 + i] == w.rewards[i]);
      CHECK(batch.actions[b * 4 + i] == w.actions[i]);
      CHECK(batch.next_states[b * 4 + i] == w.next_states[i]);
      CHECK(batch.terminal_within[b * 4 + i] == w.terminal_within[i]);
    }
  }

  // Same seed, same batch.
  Rng r1(1234), r2(1234);
  const replay::ChunkBatch b1 = buf.sample_chunk_batch(64, 4, r1);
  const replay::ChunkBatch b2 = buf.sample_chunk_batch(64, 4, r2);
  CHECK(b1.states == b2.states);
  CHECK(b1.actions == b2.actions);
  CHECK(b1.valid == b2.valid);

  CHECK_THROWS_AS((void)buf.sample_chunk_batch(0, 4, r1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)buf.sample_chunk_batch(4, 0, r1),
                  std::invalid_argument);
}

TEST_CASE("every sampled window with a terminal masks everything after it") {
  // Stress: many short episodes with terminals at varying offsets; every
  // window sampled must mask all steps after its first terminal.
  replay::ReplayBuffer buf(128, 1, 1);
  Rng gen(5);
  double t = 0.0;
  for (int e = 0; e < 40; ++e) {
    const std::size_t len = 1 + gen.uniform_index(5);
    for (std::size_t i = 0; i < len; ++i) {
      const bool last = i + 1 == len;
      const bool terminal = last && (gen.uniform() < 0.7);
      buf.push(tr(t, terminal, last && !terminal));
      t += 1.0;
    }
  }

  Rng rng(6);
  const replay::ChunkBatch batch = buf.sample_chunk_batch(2000, 4, rng);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    bool dead = false;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t k = b * 4 + i;
      if (dead) CHECK(batch.valid[k] == 0);
      if (batch.terminal_within[k]) dead = true;
      if (i > 0) {
        if (batch.terminal_within[k - 1]) CHECK(batch.terminal_within[k]);
        if (!batch.valid[k - 1]) CHECK(batch.valid[k] == 0);
      }
    }
  }
}

TEST_CASE("save_jsonl snapshots stored transitions as episode lines") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sear_replay_test";
  fs::create_directories(dir);

  replay::ReplayBuffer buf(64, 1, 1);
  envs::Episode ep0, ep1;
  for (std::size_t t = 0; t < 3; ++t) {
    envs::Transition x = tr(static_cast<double>(t), t == 2);
    ep0.push_back(x);
    buf.push(x);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    envs::Transition x = tr(static_cast<double>(20 + t), false, t == 1);
    ep1.push_back(x);
    buf.push(x);
  }

  const std::string got_path = (dir / "buffer.jsonl").string();
  const std::string want_path = (dir / "expected.jsonl").string();
  buf.save_jsonl(got_path);
  envs::write_episodes_jsonl(want_path, {ep0, ep1});
  CHECK(read_file(got_path) == read_file(want_path));

  fs::remove_all(dir);
}
