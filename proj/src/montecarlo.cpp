#include "mdx/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <thread>
#include <vector>

#include "mdx/numerics.hpp"

namespace mdx {
namespace {

constexpr double kTieSlack = 1e-9;
constexpr long long kProbeAttempts = 100000;
constexpr long long kPerWordAttemptCap = 10000000;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Counter-based generator: one independent stream per trial, so draws depend
// only on (seed, stream), never on thread scheduling.
struct Rng {
  std::uint64_t state;
  Rng(std::uint64_t seed, std::uint64_t stream)
      : state(mix64(seed ^ mix64(stream * 0x9E3779B97F4A7C15ULL +
                                 0xD1B54A32D192ED03ULL))) {}
  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    return mix64(state);
  }
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  // Integer in [0, m); multiply-shift (bias < m / 2^64, irrelevant here).
  std::uint64_t bounded(std::uint64_t m) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * m) >> 64);
  }
};

struct Sampler {
  int nx = 0, ny = 0;
  long long n = 0;
  CodebookEnsemble ensemble = CodebookEnsemble::iid;
  std::vector<double> qcum;  // input cdf
  int q_last = 0;            // last input with positive mass
  std::vector<std::vector<double>> wcum;  // per-input output cdf
  std::vector<int> w_last;                // last output with positive mass
  std::vector<double> logq;               // row-major log metric
  std::vector<int> cc_word;               // sorted letters of the cc type
  const CostEnsembleSpec* cost = nullptr;
  std::vector<double> cost_target;  // n * phi per cost
  double cost_slack = 0.0;

  int draw_input(Rng& g) const {
    const double u = g.uniform();
    for (int x = 0; x < nx; ++x)
      if (u < qcum[static_cast<size_t>(x)]) return x;
    return q_last;
  }

  int draw_output(Rng& g, int x) const {
    const double u = g.uniform();
    const auto& row = wcum[static_cast<size_t>(x)];
    for (int y = 0; y < ny; ++y)
      if (u < row[static_cast<size_t>(y)]) return y;
    return w_last[static_cast<size_t>(x)];
  }

  bool cost_ok(const std::vector<int>& word) const {
    for (size_t l = 0; l < cost->costs.size(); ++l) {
      double s = 0.0;
      for (long long i = 0; i < n; ++i)
        s += cost->costs[l][static_cast<size_t>(word[static_cast<size_t>(i)])];
      if (std::abs(s - cost_target[l]) > cost_slack) return false;
    }
    return true;
  }

  void draw_word(Rng& g, std::vector<int>& word) const {
    switch (ensemble) {
      case CodebookEnsemble::iid:
        for (long long i = 0; i < n; ++i)
          word[static_cast<size_t>(i)] = draw_input(g);
        return;
      case CodebookEnsemble::constant_composition:
        word = cc_word;
        for (long long i = n - 1; i > 0; --i) {
          const long long j = static_cast<long long>(
              g.bounded(static_cast<std::uint64_t>(i + 1)));
          std::swap(word[static_cast<size_t>(i)], word[static_cast<size_t>(j)]);
        }
        return;
      case CodebookEnsemble::cost:
        for (long long attempt = 0; attempt < kPerWordAttemptCap; ++attempt) {
          for (long long i = 0; i < n; ++i)
            word[static_cast<size_t>(i)] = draw_input(g);
          if (cost_ok(word)) return;
        }
        throw std::runtime_error(
            "rejection rate too high: no admissible cost-constrained word "
            "within the attempt cap");
    }
  }
};

// Largest-remainder type of n Q: counts k with |k/n - Q| <= 1/n, never
// assigning mass to a zero-probability letter.
std::vector<long long> type_counts(const std::vector<double>& Q, long long n) {
  const size_t m = Q.size();
  std::vector<long long> k(m, 0);
  std::vector<std::pair<double, size_t>> rem(m);
  long long used = 0;
  for (size_t x = 0; x < m; ++x) {
    const double target = static_cast<double>(n) * Q[x];
    k[x] = static_cast<long long>(std::floor(target));
    rem[x] = {target - std::floor(target), x};
    used += k[x];
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (long long d = n - used, i = 0; d > 0; --d, ++i) ++k[rem[static_cast<size_t>(i)].second];
  return k;
}

void validate_cost_spec(const CostEnsembleSpec& spec, const std::vector<double>& Q) {
  const size_t L = spec.costs.size();
  if (L == 0)
    throw std::invalid_argument("simulate: cost ensemble needs at least one cost");
  if (!(spec.delta > 0.0))
    throw std::invalid_argument("simulate: cost window delta must be positive");
  if (spec.phi.size() != L)
    throw std::invalid_argument("simulate: one mean per cost is required");
  for (size_t l = 0; l < L; ++l) {
    if (spec.costs[l].size() != Q.size())
      throw std::invalid_argument("simulate: cost length must match the alphabet");
    double dot = 0.0;
    for (size_t x = 0; x < Q.size(); ++x) {
      if (!std::isfinite(spec.costs[l][x]))
        throw std::invalid_argument("simulate: costs must be finite");
      dot += Q[x] * spec.costs[l][x];
    }
    if (std::abs(dot - spec.phi[l]) > 1e-12 * std::max(1.0, std::abs(dot)))
      throw std::invalid_argument(
          "simulate: cost means inconsistent with the input distribution");
  }
}

// Decoder comparison of a competitor score z against the transmitted score t,
// closed at ties with a relative snap; -inf scores (zero product metric)
// compare exactly.
int compare_scores(double z, double t) {
  if (t == kNegInf) return z == kNegInf ? 0 : 1;
  const double tol = kTieSlack * std::max(1.0, std::abs(t));
  if (z > t + tol) return 1;
  if (z >= t - tol) return 0;
  return -1;
}

}  // namespace

McResult montecarlo_pe(const McQuery& query) {
  query.triple.validate();
  if (query.n < 1) throw std::invalid_argument("simulate: blocklength must be >= 1");
  if (!(query.M >= 1.0) ||
      std::abs(query.M - std::round(query.M)) > 1e-9 * std::max(1.0, std::abs(query.M)))
    throw std::invalid_argument("simulate: codeword count must be an integer >= 1");
  if (query.trials < 1)
    throw std::invalid_argument("simulate: at least one trial is required");

  McResult out;
  out.trials = query.trials;
  out.seed = query.seed;
  if (query.M < 1.5) return out;  // a single codeword never errs

  const ChannelTriple& t = query.triple;
  Sampler smp;
  smp.nx = t.num_inputs();
  smp.ny = t.num_outputs();
  smp.n = query.n;
  smp.ensemble = query.ensemble;
  smp.qcum.resize(static_cast<size_t>(smp.nx));
  double c = 0.0;
  for (int x = 0; x < smp.nx; ++x) {
    c += t.Q[static_cast<size_t>(x)];
    smp.qcum[static_cast<size_t>(x)] = c;
    if (t.Q[static_cast<size_t>(x)] > 0.0) smp.q_last = x;
  }
  smp.wcum.assign(static_cast<size_t>(smp.nx),
                  std::vector<double>(static_cast<size_t>(smp.ny), 0.0));
  smp.w_last.assign(static_cast<size_t>(smp.nx), 0);
  smp.logq.assign(static_cast<size_t>(smp.nx) * static_cast<size_t>(smp.ny), kNegInf);
  for (int x = 0; x < smp.nx; ++x) {
    double wc = 0.0;
    for (int y = 0; y < smp.ny; ++y) {
      wc += t.W(x, y);
      smp.wcum[static_cast<size_t>(x)][static_cast<size_t>(y)] = wc;
      if (t.W(x, y) > 0.0) smp.w_last[static_cast<size_t>(x)] = y;
      if (t.q(x, y) > 0.0)
        smp.logq[static_cast<size_t>(x * smp.ny + y)] = std::log(t.q(x, y));
    }
  }

  if (query.ensemble == CodebookEnsemble::constant_composition) {
    const std::vector<long long> k = type_counts(t.Q, query.n);
    smp.cc_word.reserve(static_cast<size_t>(query.n));
    for (size_t x = 0; x < k.size(); ++x)
      for (long long i = 0; i < k[x]; ++i) smp.cc_word.push_back(static_cast<int>(x));
  }
  if (query.ensemble == CodebookEnsemble::cost) {
    validate_cost_spec(query.cost, t.Q);
    smp.cost = &query.cost;
    smp.cost_slack = query.cost.delta + 1e-9;
    for (double p : query.cost.phi)
      smp.cost_target.push_back(static_cast<double>(query.n) * p);
    // Acceptance probe on a dedicated stream: demand at least 1 in 10^4.
    Rng probe(query.seed, 0x8000000000000000ULL);
    std::vector<int> word(static_cast<size_t>(query.n));
    long long attempts = 0, accepts = 0;
    while (attempts < kProbeAttempts && accepts < 10) {
      for (long long i = 0; i < query.n; ++i)
        word[static_cast<size_t>(i)] = smp.draw_input(probe);
      ++attempts;
      if (smp.cost_ok(word)) ++accepts;
    }
    if (accepts < 10)
      throw std::runtime_error(
          "rejection rate too high: the cost window accepts fewer than 1 in "
          "10^4 iid draws");
  }

  const long long competitors = static_cast<long long>(std::llround(query.M)) - 1;
  const long long trials = query.trials;
  auto run_trial = [&](long long trial) -> int {
    Rng g(query.seed, static_cast<std::uint64_t>(trial));
    std::vector<int> xw(static_cast<size_t>(query.n));
    std::vector<int> yw(static_cast<size_t>(query.n));
    std::vector<int> comp(static_cast<size_t>(query.n));
    smp.draw_word(g, xw);
    double tscore = 0.0;
    for (long long i = 0; i < query.n; ++i) {
      const int x = xw[static_cast<size_t>(i)];
      const int y = smp.draw_output(g, x);
      yw[static_cast<size_t>(i)] = y;
      tscore += smp.logq[static_cast<size_t>(x * smp.ny + y)];
    }
    long long ties = 0;
    for (long long j = 0; j < competitors; ++j) {
      smp.draw_word(g, comp);
      double z = 0.0;
      for (long long i = 0; i < query.n; ++i)
        z += smp.logq[static_cast<size_t>(
            comp[static_cast<size_t>(i)] * smp.ny + yw[static_cast<size_t>(i)])];
      const int cmp = compare_scores(z, tscore);
      if (cmp > 0) return 1;  // a strictly better competitor always wins
      if (cmp == 0) ++ties;
    }
    if (ties == 0) return 0;
    // Uniform tie-break among the transmitted word and its tied competitors.
    return g.uniform() <
                   static_cast<double>(ties) / static_cast<double>(ties + 1)
               ? 1
               : 0;
  };

  int nthreads = query.threads > 0
                     ? query.threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min({nthreads, 64,
                                   static_cast<int>(std::min<long long>(trials, 64))}));
  std::vector<long long> partial(static_cast<size_t>(nthreads), 0);
  std::vector<std::exception_ptr> errs(static_cast<size_t>(nthreads));
  std::vector<std::thread> pool;
  for (int w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        const long long lo = trials * w / nthreads;
        const long long hi = trials * (w + 1) / nthreads;
        long long e = 0;
        for (long long trial = lo; trial < hi; ++trial) e += run_trial(trial);
        partial[static_cast<size_t>(w)] = e;
      } catch (...) {
        errs[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errs)
    if (e) std::rethrow_exception(e);

  for (long long e : partial) out.errors += e;
  out.estimate = static_cast<double>(out.errors) / static_cast<double>(trials);
  out.ci95 = 1.96 * std::sqrt(std::max(0.0, out.estimate * (1.0 - out.estimate) /
                                                static_cast<double>(trials)));
  return out;
}

}  // namespace mdx
