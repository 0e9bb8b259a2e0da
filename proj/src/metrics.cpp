#include "sear/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "sear/algo.hpp"
#include "sear/rng.hpp"

namespace sear::metrics {

namespace {

// Canonical float formatting shared by every artifact writer, so identical
// inputs always produce identical bytes.
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s) {
    out += (std::isalnum(static_cast<unsigned char>(ch)) != 0) ? ch : '_';
  }
  return out.empty() ? std::string("task") : out;
}

struct CurvePoint {
  std::size_t env_step = 0;
  double iqm_success = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  double iqm_return = 0.0;
};

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& pts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "env_step,iqm_success,ci_lo,ci_hi,iqm_return\n";
  for (const CurvePoint& p : pts) {
    out << p.env_step << ',' << fmt(p.iqm_success) << ',' << fmt(p.ci_lo)
        << ',' << fmt(p.ci_hi) << ',' << fmt(p.iqm_return) << '\n';
  }
}

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Self-contained SVG: success in [0,1] on y, env_step on x, shaded CI band
// behind the IQM line.
void write_curve_svg(const std::string& path, const std::string& title,
                     const std::vector<CurvePoint>& pts) {
  const double w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  double step_min = static_cast<double>(pts.front().env_step);
  double step_max = static_cast<double>(pts.back().env_step);
  if (step_max <= step_min) step_max = step_min + 1.0;
  auto X = [&](double s) { return ml + (s - step_min) / (step_max - step_min) * pw; };
  auto Y = [&](double v) { return mt + (1.0 - v) * ph; };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h
      << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << svg_num(w / 2) << "\" y=\"24\" font-family=\"sans-serif\""
      << " font-size=\"16\" text-anchor=\"middle\">" << title << "</text>\n";

  // CI band.
  out << "<polygon fill=\"#7fb3d5\" fill-opacity=\"0.35\" stroke=\"none\" points=\"";
  for (const CurvePoint& p : pts) {
    out << svg_num(X(static_cast<double>(p.env_step))) << ','
        << svg_num(Y(p.ci_hi)) << ' ';
  }
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    out << svg_num(X(static_cast<double>(it->env_step))) << ','
        << svg_num(Y(it->ci_lo)) << ' ';
  }
  out << "\"/>\n";

  // IQM line + markers.
  out << "<polyline fill=\"none\" stroke=\"#1f618d\" stroke-width=\"2\" points=\"";
  for (const CurvePoint& p : pts) {
    out << svg_num(X(static_cast<double>(p.env_step))) << ','
        << svg_num(Y(p.iqm_success)) << ' ';
  }
  out << "\"/>\n";
  for (const CurvePoint& p : pts) {
    out << "<circle cx=\"" << svg_num(X(static_cast<double>(p.env_step)))
        << "\" cy=\"" << svg_num(Y(p.iqm_success))
        << "\" r=\"2.5\" fill=\"#1f618d\"/>\n";
  }

  // Axes.
  out << "<line x1=\"" << svg_num(ml) << "\" y1=\"" << svg_num(mt)
      << "\" x2=\"" << svg_num(ml) << "\" y2=\"" << svg_num(mt + ph)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << svg_num(ml) << "\" y1=\"" << svg_num(mt + ph)
      << "\" x2=\"" << svg_num(ml + pw) << "\" y2=\"" << svg_num(mt + ph)
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i * 0.25;
    out << "<text x=\"" << svg_num(ml - 8) << "\" y=\"" << svg_num(Y(v) + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
        << svg_num(v) << "</text>\n";
    out << "<line x1=\"" << svg_num(ml - 4) << "\" y1=\"" << svg_num(Y(v))
        << "\" x2=\"" << svg_num(ml) << "\" y2=\"" << svg_num(Y(v))
        << "\" stroke=\"black\"/>\n";
  }
  out << "<text x=\"" << svg_num(ml) << "\" y=\"" << svg_num(h - 16)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
      << pts.front().env_step << "</text>\n";
  out << "<text x=\"" << svg_num(ml + pw) << "\" y=\"" << svg_num(h - 16)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
      << pts.back().env_step << "</text>\n";
  out << "<text x=\"" << svg_num(ml + pw / 2) << "\" y=\"" << svg_num(h - 16)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">env_step</text>\n";
  out << "<text x=\"16\" y=\"" << svg_num(mt + ph / 2)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\""
      << " transform=\"rotate(-90 16 " << svg_num(mt + ph / 2)
      << ")\">IQM success</text>\n";
  out << "</svg>\n";
}

// Builds the per-step curve for a group of runs: at each env_step present in
// every run of the group, the IQM across the group's success values and a
// seeded 95% bootstrap CI.
std::vector<CurvePoint> build_curve(const std::vector<const RunResult*>& runs) {
  std::map<std::size_t, std::size_t> step_counts;
  for (const RunResult* r : runs) {
    for (const CheckpointStat& c : r->checkpoints) ++step_counts[c.env_step];
  }
  std::vector<CurvePoint> pts;
  for (const auto& [step, count] : step_counts) {
    if (count != runs.size()) continue;  // keep the common intersection only
    std::vector<double> succ, ret;
    for (const RunResult* r : runs) {
      for (const CheckpointStat& c : r->checkpoints) {
        if (c.env_step == step) {
          succ.push_back(c.success);
          ret.push_back(c.mean_return);
        }
      }
    }
    CurvePoint p;
    p.env_step = step;
    p.iqm_success = iqm(succ);
    p.iqm_return = iqm(ret);
    // Fixed per-step seed keeps re-emission byte-identical.
    std::tie(p.ci_lo, p.ci_hi) =
        bootstrap_ci(succ, 1000, 0.95, mix_seed(0x5ea2cu, step));
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

double iqm(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("iqm: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t trim = n / 4;
  double acc = 0.0;
  for (std::size_t i = trim; i < n - trim; ++i) acc += values[i];
  return acc / static_cast<double>(n - 2 * trim);
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       std::size_t resamples, double level,
                                       std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci: empty input");
  if (resamples < 1000) {
    throw std::invalid_argument("bootstrap_ci: resamples must be >= 1000");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("bootstrap_ci: level must lie in (0, 1)");
  }
  const std::size_t n = values.size();
  Rng rng(seed);
  std::vector<double> estimates(resamples);
  std::vector<double> resample(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = values[rng.uniform_index(n)];
    }
    estimates[r] = iqm(resample);
  }
  std::sort(estimates.begin(), estimates.end());
  const auto q = static_cast<std::size_t>(
      std::floor((1.0 - level) / 2.0 * static_cast<double>(resamples)));
  const double point = iqm(values);
  return {std::min(estimates[q], point),
          std::max(estimates[resamples - 1 - q], point)};
}

void validate(const RunResult& r) {
  std::size_t prev = 0;
  bool first = true;
  for (const CheckpointStat& c : r.checkpoints) {
    if (!(c.success >= 0.0 && c.success <= 1.0)) {
      throw std::invalid_argument("run result: success rate outside [0, 1]");
    }
    if (!first && c.env_step <= prev) {
      throw std::invalid_argument(
          "run result: env_steps must be strictly increasing");
    }
    prev = c.env_step;
    first = false;
  }
}

std::vector<std::pair<std::size_t, double>> sweep_receding_horizon(
    envs::Env& env, const nets::Actor& actor,
    const std::vector<std::size_t>& k_values, std::size_t episodes,
    std::uint64_t base_seed) {
  if (episodes == 0) {
    throw std::invalid_argument("sweep_receding_horizon: episodes must be >= 1");
  }
  const std::size_t N = actor.config().chunk;
  for (std::size_t k : k_values) {
    if (k < 1 || k > N) {
      throw std::invalid_argument(
          "sweep_receding_horizon: every k must satisfy 1 <= k <= chunk");
    }
  }
  std::vector<std::pair<std::size_t, double>> table;
  for (std::size_t k : k_values) {
    std::size_t wins = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
      // Same per-episode seed for every k: identical initial conditions.
      envs::Episode ep =
          algo::receding_horizon_rollout(env, actor, k, mix_seed(base_seed, e));
      if (envs::episode_success(env, ep)) ++wins;
    }
    table.emplace_back(k, static_cast<double>(wins) /
                              static_cast<double>(episodes));
  }
  return table;
}

void emit_curves(const std::vector<RunResult>& results,
                 const std::string& dir) {
  if (results.empty()) {
    throw std::invalid_argument("emit_curves: need at least one run result");
  }
  for (const RunResult& r : results) validate(r);
  std::filesystem::create_directories(dir);

  // Raw data, canonically ordered.
  std::vector<const RunResult*> order;
  for (const RunResult& r : results) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const RunResult* a, const RunResult* b) {
              return std::tie(a->task, a->seed) < std::tie(b->task, b->seed);
            });
  {
    std::ofstream out(dir + "/raw.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/raw.csv");
    out << "task,seed,env_step,success,mean_return\n";
    for (const RunResult* r : order) {
      for (const CheckpointStat& c : r->checkpoints) {
        out << r->task << ',' << r->seed << ',' << c.env_step << ','
            << fmt(c.success) << ',' << fmt(c.mean_return) << '\n';
      }
    }
  }

  std::map<std::string, std::vector<const RunResult*>> by_task;
  for (const RunResult* r : order) by_task[r->task].push_back(r);

  for (const auto& [task, runs] : by_task) {
    std::vector<CurvePoint> pts = build_curve(runs);
    if (pts.empty()) continue;  // no common checkpoints across seeds
    const std::string base = dir + "/curve_" + sanitize(task);
    write_curve_csv(base + ".csv", pts);
    write_curve_svg(base + ".svg", task, pts);
  }

  std::vector<CurvePoint> agg = build_curve(order);
  if (!agg.empty()) {
    write_curve_csv(dir + "/curve_aggregate.csv", agg);
    write_curve_svg(dir + "/curve_aggregate.svg", "aggregate", agg);
  }
}

}  // namespace sear::metrics
