#pragma once

#include <cmath>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tpemu/types.hpp"

namespace tpemu {

enum class ParamTransform { Identity, Log, Logit };

// One Metropolis block: the listed parameter indices are perturbed jointly on
// the transformed scale and accepted or rejected together.
struct BlockDef {
  std::string name;
  std::vector<int> indices;
  ParamTransform transform = ParamTransform::Identity;
  double scale = 0.0;  // initial proposal sd; <= 0 means use ChainOptions::init_scale
};

struct ChainOptions {
  int n_iter = 10000;
  int burn_in = 1000;
  double init_scale = 0.3;
  bool adapt = true;
  int adapt_window = 100;
  double target_low = 0.2;
  double target_high = 0.5;
  std::uint64_t seed = 0;
};

// Log posterior evaluated by the sampler.  `block` identifies which block of
// `params` differs from the last committed state, so implementations can use
// low-rank update machinery; block < 0 requests a fresh full evaluation.
// commit() is called whenever a proposal is accepted (and once at the start)
// so cached state can be brought in line with `params`.
class BlockTarget {
 public:
  virtual ~BlockTarget() = default;
  virtual double log_density(const Vector& params, int block) = 0;
  virtual void commit(const Vector& params, int block) { (void)params, (void)block; }
};

struct PosteriorSamples {
  Matrix draws;  // one row per post-burn-in iteration
  std::vector<std::string> names;
  std::vector<double> acceptance;  // per block, after burn-in
  std::vector<double> scales;      // proposal scales at the end of the run
  Vector log_posterior_trace;
};

namespace detail {

inline double to_working(double v, ParamTransform t) {
  switch (t) {
    case ParamTransform::Log: return std::log(v);
    case ParamTransform::Logit: return std::log(v) - std::log1p(-v);
    default: return v;
  }
}

inline double from_working(double w, ParamTransform t) {
  switch (t) {
    case ParamTransform::Log: return std::exp(w);
    case ParamTransform::Logit: return 1.0 / (1.0 + std::exp(-w));
    default: return w;
  }
}

// log |dv/dw| for the change of variables, evaluated at v
inline double log_jacobian(double v, ParamTransform t) {
  switch (t) {
    case ParamTransform::Log: return std::log(v);
    case ParamTransform::Logit: return std::log(v) + std::log1p(-v);
    default: return 0.0;
  }
}

}  // namespace detail

// Blockwise random-walk Metropolis on transformed coordinates.  Proposal
// scales adapt during burn-in toward the configured acceptance window.
// Deterministic for a fixed seed: the random stream is consumed only here,
// never by the target.
inline PosteriorSamples metropolis_chain(BlockTarget& target, Vector params,
                                         std::vector<BlockDef> blocks,
                                         const ChainOptions& opts) {
  require(opts.n_iter > 0 && opts.burn_in >= 0 && opts.burn_in < opts.n_iter,
          "chain needs 0 <= burn_in < n_iter");
  require(!blocks.empty(), "chain needs at least one block");
  const int dim = static_cast<int>(params.size());
  for (auto& b : blocks) {
    require(!b.indices.empty(), "empty sampler block: " + b.name);
    for (int idx : b.indices)
      require(idx >= 0 && idx < dim, "block index out of range: " + b.name);
    if (b.scale <= 0.0) b.scale = opts.init_scale;
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  double cur_lp = target.log_density(params, -1);
  require(std::isfinite(cur_lp), "log posterior not finite at the initial state");
  target.commit(params, -1);

  const int n_blocks = static_cast<int>(blocks.size());
  const int n_keep = opts.n_iter - opts.burn_in;
  PosteriorSamples out;
  out.draws.resize(n_keep, dim);
  out.log_posterior_trace.resize(n_keep);
  out.names.assign(dim, "");
  for (int i = 0; i < dim; ++i) out.names[i] = "param[" + std::to_string(i) + "]";
  for (const auto& b : blocks) {
    if (b.indices.size() == 1) {
      out.names[b.indices[0]] = b.name;
    } else {
      for (std::size_t j = 0; j < b.indices.size(); ++j)
        out.names[b.indices[j]] = b.name + "[" + std::to_string(j) + "]";
    }
  }

  std::vector<long> window_accepts(n_blocks, 0), kept_accepts(n_blocks, 0);
  std::vector<long> consecutive_rejects(n_blocks, 0);
  std::vector<bool> stall_warned(n_blocks, false);

  Vector proposal = params;
  for (int iter = 0; iter < opts.n_iter; ++iter) {
    for (int b = 0; b < n_blocks; ++b) {
      const auto& blk = blocks[b];
      proposal = params;
      double jac_delta = 0.0;
      for (int idx : blk.indices) {
        double w = detail::to_working(params[idx], blk.transform);
        double v_new = detail::from_working(w + blk.scale * normal(rng), blk.transform);
        proposal[idx] = v_new;
        jac_delta += detail::log_jacobian(v_new, blk.transform) -
                     detail::log_jacobian(params[idx], blk.transform);
      }
      double new_lp = target.log_density(proposal, b);
      double log_alpha = new_lp - cur_lp + jac_delta;
      double u = unif(rng);  // always drawn, keeps the stream backend-independent
      if (std::log(u) < log_alpha) {
        params = proposal;
        cur_lp = new_lp;
        target.commit(params, b);
        ++window_accepts[b];
        consecutive_rejects[b] = 0;
        if (iter >= opts.burn_in) ++kept_accepts[b];
      } else if (++consecutive_rejects[b] >= 1000 && !stall_warned[b]) {
        stall_warned[b] = true;
        std::cerr << "warning: sampler block '" << blk.name
                  << "' rejected 1000 consecutive proposals\n";
      }
    }

    if (opts.adapt && iter < opts.burn_in && (iter + 1) % opts.adapt_window == 0) {
      for (int b = 0; b < n_blocks; ++b) {
        double rate = static_cast<double>(window_accepts[b]) / opts.adapt_window;
        if (rate < opts.target_low) blocks[b].scale *= 0.7;
        else if (rate > opts.target_high) blocks[b].scale /= 0.7;
        window_accepts[b] = 0;
      }
    }

    if (iter >= opts.burn_in) {
      out.draws.row(iter - opts.burn_in) = params.transpose();
      out.log_posterior_trace[iter - opts.burn_in] = cur_lp;
    }
  }

  out.acceptance.resize(n_blocks);
  out.scales.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    out.acceptance[b] = static_cast<double>(kept_accepts[b]) / n_keep;
    out.scales[b] = blocks[b].scale;
  }
  return out;
}

}  // namespace tpemu
