// Command-line surface: loads a channel description, sweeps rate or
// blocklength grids through the library, and emits plot-ready CSV plus a JSON
// run manifest.  All numeric output uses %.12g with '.' decimals; identical
// inputs produce byte-identical CSV regardless of thread count.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdx/bounds.hpp"
#include "mdx/channel.hpp"
#include "mdx/exponents.hpp"
#include "mdx/montecarlo.hpp"
#include "mdx/numerics.hpp"
#include "mdx/rates.hpp"
#include "mdx/saddlepoint.hpp"
#include "mdx/tilted.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";

using mdx::kLog2;

// ---------------------------------------------------------------------------
// Formatting and small utilities
// ---------------------------------------------------------------------------

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt(long long v) { return std::to_string(v); }

double log10_from_ln(double ln_value) {
  return ln_value / std::log(10.0);
}

std::string one_line(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

struct Grid {
  std::vector<double> points;
  std::string raw;
};

// Parses "start:stop:step" (inclusive of stop up to a step*1e-9 slack) or a
// single number.  The result is nonempty and strictly increasing.
Grid parse_grid(const std::string& text) {
  Grid g;
  g.raw = text;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  try {
    if (parts.size() == 1) {
      g.points.push_back(std::stod(parts[0]));
      return g;
    }
    if (parts.size() != 3)
      throw std::invalid_argument("grid must be VALUE or START:STOP:STEP");
    const double start = std::stod(parts[0]);
    const double stop = std::stod(parts[1]);
    const double step = std::stod(parts[2]);
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be > 0");
    if (stop < start - 1e-12)
      throw std::invalid_argument("grid stop must be >= start");
    for (double v = start; v <= stop + step * 1e-9; v += step)
      g.points.push_back(v);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("grid: cannot parse '" + text + "'");
  }
  if (g.points.empty()) throw std::invalid_argument("grid is empty");
  for (size_t i = 1; i < g.points.size(); ++i)
    if (!(g.points[i] > g.points[i - 1]))
      throw std::invalid_argument("grid must be strictly increasing");
  return g;
}

std::vector<long long> integer_grid(const Grid& g) {
  std::vector<long long> out;
  for (double v : g.points) {
    const long long k = std::llround(v);
    if (std::abs(v - static_cast<double>(k)) > 1e-9 || k < 1)
      throw std::invalid_argument(
          "grid: blocklengths must be positive integers");
    out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV + manifest emission: rows are computed fully in memory, written to a
// temporary file, and renamed into place, so failures never leave partial
// outputs behind.
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string manifest_path_for(const std::string& csv_path) {
  const std::string ext = ".csv";
  if (csv_path.size() > ext.size() &&
      csv_path.compare(csv_path.size() - ext.size(), ext.size(), ext) == 0)
    return csv_path.substr(0, csv_path.size() - ext.size()) +
           ".manifest.json";
  return csv_path + ".manifest.json";
}

void write_outputs(const Table& table, const std::string& out_path,
                   const nlohmann::json& manifest) {
  namespace fs = std::filesystem;
  const std::string tmp = out_path + ".tmp";
  try {
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open output " + out_path);
      for (size_t i = 0; i < table.header.size(); ++i)
        f << (i ? "," : "") << table.header[i];
      f << "\n";
      for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << "\n";
      }
      if (!f) throw std::runtime_error("write failed for " + out_path);
    }
    fs::rename(tmp, out_path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  const std::string mpath = manifest_path_for(out_path);
  try {
    std::ofstream f(mpath, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open manifest " + mpath);
    f << manifest.dump(2) << "\n";
    if (!f) throw std::runtime_error("write failed for " + mpath);
  } catch (...) {
    std::error_code ec;
    fs::remove(out_path, ec);
    fs::remove(mpath, ec);
    throw;
  }
}

// Runs fn(i) for i in [0, count) on a pool and keeps results indexable, so
// output order never depends on completion order.
void parallel_for(size_t count, int threads,
                  const std::function<void(size_t)>& fn) {
  int t = threads > 0 ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  t = std::max(1, std::min<int>(t, static_cast<int>(count)));
  if (t == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= count) return;
        {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (first_error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Shared options
// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string channel;
  std::string out;
  std::string units = "bits";
  std::uint64_t seed = 1;
  std::string s_text = "auto";
  std::string grid_text;
  double eps = 1e-3;
  long long n = 0;
  double M = 0.0;
  bool bracket = false;
  double delta_grid = 1e-4;
  double budget = 1e8;
  int threads = 0;
  bool with_log_term = false;
  bool with_rcuss = false;
  bool certify = false;
  long long trials = 10000;
  std::string ensemble = "iid";
  double cost_delta = 0.0;
  std::string targets = "rcu,rcus,rcushat,rcusshat,normal,exponent";
};

bool want_bits(const CommonOpts& o) {
  return o.units == "bits" || o.units == "both";
}
bool want_nats(const CommonOpts& o) {
  return o.units == "nats" || o.units == "both";
}

std::optional<double> pinned_s(const CommonOpts& o) {
  if (o.s_text == "auto") return std::nullopt;
  try {
    return std::stod(o.s_text);
  } catch (const std::exception&) {
    throw std::invalid_argument("--s must be a number or 'auto'");
  }
}

// Rate columns: grid rates are interpreted in the selected unit (bits unless
// --units nats) and echoed in every requested unit.
double grid_rate_to_nats(const CommonOpts& o, double v) {
  return o.units == "nats" ? v : v * kLog2;
}

void push_rate_header(const CommonOpts& o, std::vector<std::string>& h,
                      const std::string& stem) {
  if (want_bits(o)) h.push_back(stem + "_bits");
  if (want_nats(o)) h.push_back(stem + "_nats");
}

void push_rate_cells(const CommonOpts& o, std::vector<std::string>& row,
                     double nats) {
  if (want_bits(o)) row.push_back(fmt(nats / kLog2));
  if (want_nats(o)) row.push_back(fmt(nats));
}

nlohmann::json base_manifest(const std::string& command, const CommonOpts& o,
                             size_t rows, long long elapsed_ms) {
  nlohmann::json j;
  j["tool"] = "mdx";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["channel"] = o.channel;
  j["out"] = o.out;
  j["units"] = o.units;
  j["seed"] = o.seed;
  j["s"] = o.s_text;
  j["grid"] = o.grid_text.empty() ? nlohmann::json() : nlohmann::json(o.grid_text);
  j["rows"] = rows;
  j["elapsed_ms"] = elapsed_ms;
  return j;
}

// Codebook size for a rate grid point: the nearest integer to e^{n R}, never
// below 2.  Throws when the count overflows the double range.
double codebook_size(long long n, double rate_nats) {
  const double mu = static_cast<double>(n) * rate_nats;
  if (mu > 700.0)
    throw std::invalid_argument(
        "codebook size overflows at n * rate = " + fmt(mu) + " nats");
  return std::max(2.0, std::nearbyint(std::exp(mu)));
}

// Dispersion estimate of the error probability at a fixed rate: the Gaussian
// tail at the standardized gap between the per-letter mean and the rate.
double normal_pe_log(const mdx::Moments& m, long long n, double rate_nats,
                     bool with_log_term) {
  double gap = m.mean - rate_nats;
  if (with_log_term)
    gap += 0.5 * std::log(static_cast<double>(n)) / static_cast<double>(n);
  const double z = gap * std::sqrt(static_cast<double>(n) / m.variance);
  return mdx::gaussian_tail_log(z);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int run_rates(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  const mdx::RateResult g = mdx::gmi(t);
  const mdx::RateResult l = mdx::lm_rate(t);
  const double mi = mdx::mutual_information(t);
  Table tab;
  push_rate_header(o, tab.header, "gmi");
  tab.header.push_back("gmi_s");
  tab.header.push_back("gmi_kkt");
  push_rate_header(o, tab.header, "lm");
  tab.header.push_back("lm_s");
  tab.header.push_back("lm_kkt");
  push_rate_header(o, tab.header, "mi");
  if (o.certify) push_rate_header(o, tab.header, "lm_upper");
  std::vector<std::string> row;
  push_rate_cells(o, row, g.value);
  row.push_back(fmt(g.s_star));
  row.push_back(fmt(g.kkt_residual));
  push_rate_cells(o, row, l.value);
  row.push_back(fmt(l.s_star));
  row.push_back(fmt(l.kkt_residual));
  push_rate_cells(o, row, mi);
  if (o.certify) push_rate_cells(o, row, mdx::lm_primal_upper(t));
  tab.rows.push_back(std::move(row));
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  write_outputs(tab, o.out, base_manifest("rates", o, tab.rows.size(), ms));
  return 0;
}

int run_exponents(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  const Grid grid = parse_grid(o.grid_text);
  Table tab;
  push_rate_header(o, tab.header, "rate");
  tab.header.insert(tab.header.end(),
                    {"er_iid", "er_cost1", "er_cost_prime", "er_cc"});
  tab.rows.resize(grid.points.size());
  parallel_for(grid.points.size(), o.threads, [&](size_t i) {
    const double r = grid_rate_to_nats(o, grid.points[i]);
    std::vector<std::string> row;
    push_rate_cells(o, row, r);
    row.push_back(fmt(mdx::er_iid(t, r).value));
    row.push_back(fmt(mdx::er_cost_opt1(t, r).value));
    row.push_back(fmt(mdx::er_cost_prime_opt(t, r).value));
    row.push_back(fmt(mdx::er_cc(t, r).value));
    tab.rows[i] = std::move(row);
  });
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  write_outputs(tab, o.out,
                base_manifest("exponents", o, tab.rows.size(), ms));
  return 0;
}

int run_bounds(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  if (o.n < 1) throw std::invalid_argument("--n must be a positive integer");
  const Grid grid = parse_grid(o.grid_text);
  const std::optional<double> s_pin = pinned_s(o);
  const bool singular = !t.assumptions().nonsingular;
  if (singular)
    std::fprintf(stderr,
                 "notice: singular triple; sharpened bound unavailable, "
                 "reporting the plain approximation for rcusshat%s\n",
                 o.with_rcuss ? " and rcus for rcuss" : "");
  const double s_norm = s_pin ? *s_pin : mdx::gmi(t).s_star;
  const mdx::Moments norm_m = mdx::moments(mdx::make_family(t, s_norm));

  Table tab;
  push_rate_header(o, tab.header, "rate");
  tab.header.insert(tab.header.end(), {"M", "s"});
  auto prob_cols = [&](const std::string& stem) {
    tab.header.push_back(stem);
    tab.header.push_back("log10_" + stem);
    if (o.bracket) {
      tab.header.push_back(stem + "_lower");
      tab.header.push_back(stem + "_upper");
    }
  };
  prob_cols("rcu");
  prob_cols("rcus");
  if (o.with_rcuss) prob_cols("rcuss");
  tab.header.insert(tab.header.end(), {"rcushat", "log10_rcushat",
                                       "rcusshat", "log10_rcusshat",
                                       "normal", "log10_normal",
                                       "exponent_approx",
                                       "log10_exponent_approx"});
  tab.rows.resize(grid.points.size());
  parallel_for(grid.points.size(), o.threads, [&](size_t i) {
    const double r = grid_rate_to_nats(o, grid.points[i]);
    const double M = codebook_size(o.n, r);
    const double s = s_pin ? *s_pin : mdx::er_iid(t, r).s;
    std::vector<std::string> row;
    push_rate_cells(o, row, r);
    row.push_back(fmt(M));
    row.push_back(fmt(s));
    mdx::BoundQuery q{t,
                      o.n,
                      M,
                      s,
                      mdx::Quantization::automatic,
                      o.bracket ? mdx::BracketMode::certified
                                : mdx::BracketMode::point,
                      o.delta_grid,
                      o.budget};
    auto push_bound = [&](const mdx::BoundResult& b) {
      row.push_back(fmt(b.value));
      row.push_back(fmt(std::log10(b.value)));
      if (o.bracket) {
        row.push_back(fmt(b.lower));
        row.push_back(fmt(b.upper));
      }
    };
    push_bound(mdx::rcu_exact(q));
    const mdx::BoundResult rs = mdx::rcus_exact(q);
    push_bound(rs);
    if (o.with_rcuss) push_bound(singular ? rs : mdx::rcuss_exact(q));
    const mdx::ApproxResult h1 = mdx::rcus_hat(t, s, o.n, M);
    const mdx::ApproxResult h2 = singular ? h1 : mdx::rcuss_hat(t, s, o.n, M);
    row.push_back(fmt(h1.value));
    row.push_back(fmt(log10_from_ln(h1.log_value)));
    row.push_back(fmt(h2.value));
    row.push_back(fmt(log10_from_ln(h2.log_value)));
    const double npe = normal_pe_log(norm_m, o.n, r, o.with_log_term);
    row.push_back(fmt(std::exp(npe)));
    row.push_back(fmt(log10_from_ln(npe)));
    const double ea = mdx::exponent_approx(t, r, o.n);
    row.push_back(fmt(ea));
    row.push_back(fmt(std::log10(ea)));
    tab.rows[i] = std::move(row);
  });
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  write_outputs(tab, o.out, base_manifest("bounds", o, tab.rows.size(), ms));
  return 0;
}

int run_approx(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  if (o.n < 1) throw std::invalid_argument("--n must be a positive integer");
  const Grid grid = parse_grid(o.grid_text);
  const std::optional<double> s_pin = pinned_s(o);
  const bool singular = !t.assumptions().nonsingular;
  if (singular)
    std::fprintf(stderr,
                 "notice: singular triple; sharpened approximation "
                 "unavailable, reporting the plain approximation for "
                 "rcusshat\n");
  Table tab;
  push_rate_header(o, tab.header, "rate");
  tab.header.insert(tab.header.end(),
                    {"M", "s", "rho_hat", "e0", "exponent", "alpha", "beta",
                     "rcushat", "log10_rcushat", "rcusshat",
                     "log10_rcusshat"});
  tab.rows.resize(grid.points.size());
  parallel_for(grid.points.size(), o.threads, [&](size_t i) {
    const double r = grid_rate_to_nats(o, grid.points[i]);
    const double M = codebook_size(o.n, r);
    const double s = s_pin ? *s_pin : mdx::er_iid(t, r).s;
    const mdx::ApproxResult h1 = mdx::rcus_hat(t, s, o.n, M);
    const mdx::ApproxResult h2 = singular ? h1 : mdx::rcuss_hat(t, s, o.n, M);
    std::vector<std::string> row;
    push_rate_cells(o, row, r);
    row.push_back(fmt(M));
    row.push_back(fmt(s));
    row.push_back(fmt(h1.params.rho_hat));
    row.push_back(fmt(h1.params.e0_value));
    row.push_back(fmt(h1.exponent));
    row.push_back(fmt(h1.prefactor));
    row.push_back(fmt(h2.prefactor));
    row.push_back(fmt(h1.value));
    row.push_back(fmt(log10_from_ln(h1.log_value)));
    row.push_back(fmt(h2.value));
    row.push_back(fmt(log10_from_ln(h2.log_value)));
    tab.rows[i] = std::move(row);
  });
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  write_outputs(tab, o.out, base_manifest("approx", o, tab.rows.size(), ms));
  return 0;
}

struct InvertTarget {
  std::string name;
  mdx::PeTarget target;
  bool with_log_term = false;
};

std::vector<InvertTarget> parse_targets(const std::string& text,
                                        bool singular) {
  std::vector<InvertTarget> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    InvertTarget tg;
    tg.name = item;
    if (item == "rcu") {
      tg.target = mdx::PeTarget::rcu;
    } else if (item == "rcus") {
      tg.target = mdx::PeTarget::rcus;
    } else if (item == "rcuss") {
      tg.target = singular ? mdx::PeTarget::rcus : mdx::PeTarget::rcuss;
    } else if (item == "rcushat") {
      tg.target = mdx::PeTarget::rcus_hat;
    } else if (item == "rcusshat") {
      tg.target =
          singular ? mdx::PeTarget::rcus_hat : mdx::PeTarget::rcuss_hat;
    } else if (item == "normal") {
      tg.target = mdx::PeTarget::normal;
    } else if (item == "normal_log") {
      tg.target = mdx::PeTarget::normal;
      tg.with_log_term = true;
    } else if (item == "exponent") {
      tg.target = mdx::PeTarget::exponent;
    } else {
      throw std::invalid_argument("unknown inversion target '" + item + "'");
    }
    out.push_back(tg);
  }
  if (out.empty()) throw std::invalid_argument("no inversion targets given");
  return out;
}

int run_invert(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  if (!(o.eps > 0.0 && o.eps < 1.0))
    throw std::invalid_argument("--eps must lie in (0, 1)");
  const Grid grid = parse_grid(o.grid_text);
  const std::vector<long long> ns = integer_grid(grid);
  const bool singular = !t.assumptions().nonsingular;
  if (singular)
    std::fprintf(stderr,
                 "notice: singular triple; sharpened targets fall back to "
                 "their plain counterparts\n");
  const std::vector<InvertTarget> targets = parse_targets(o.targets, singular);
  const std::optional<double> s_pin = pinned_s(o);
  Table tab;
  tab.header.push_back("n");
  for (const auto& tg : targets) push_rate_header(o, tab.header, tg.name);
  tab.rows.resize(ns.size());
  parallel_for(ns.size(), o.threads, [&](size_t i) {
    std::vector<std::string> row;
    row.push_back(fmt(ns[i]));
    for (const auto& tg : targets) {
      mdx::InversionOptions opts;
      opts.s = s_pin;
      opts.budget = o.budget;
      opts.with_log_term = tg.with_log_term;
      const double bits =
          mdx::rate_for_epsilon(tg.target, t, ns[i], o.eps, opts);
      push_rate_cells(o, row, bits * kLog2);
    }
    tab.rows[i] = std::move(row);
  });
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  nlohmann::json man = base_manifest("invert", o, tab.rows.size(), ms);
  man["eps"] = o.eps;
  man["targets"] = o.targets;
  write_outputs(tab, o.out, man);
  return 0;
}

int run_simulate(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  if (o.n < 1) throw std::invalid_argument("--n must be a positive integer");
  const std::optional<double> s_pin = pinned_s(o);

  mdx::McQuery q;
  q.triple = t;
  q.n = o.n;
  q.trials = o.trials;
  q.seed = o.seed;
  q.threads = o.threads;
  if (o.ensemble == "iid") {
    q.ensemble = mdx::CodebookEnsemble::iid;
  } else if (o.ensemble == "cc") {
    q.ensemble = mdx::CodebookEnsemble::constant_composition;
  } else if (o.ensemble == "cost") {
    q.ensemble = mdx::CodebookEnsemble::cost;
    const double s = s_pin ? *s_pin : mdx::gmi(t).s_star;
    std::vector<double> cost =
        mdx::conditional_mean_by_input(mdx::make_family(t, s));
    double mean = 0.0, mean_sq = 0.0;
    for (int x = 0; x < t.num_inputs(); ++x) {
      mean += t.Q[x] * cost[x];
      mean_sq += t.Q[x] * cost[x] * cost[x];
    }
    q.cost.costs = {cost};
    q.cost.phi = {mean};
    q.cost.delta = o.cost_delta > 0.0
                       ? o.cost_delta
                       : std::sqrt(std::max(0.0, mean_sq - mean * mean));
  } else {
    throw std::invalid_argument("--ensemble must be iid, cc, or cost");
  }

  Table tab;
  const bool sweep = !o.grid_text.empty();
  if (sweep) push_rate_header(o, tab.header, "rate");
  tab.header.insert(tab.header.end(), {"n", "M", "trials", "seed", "errors",
                                       "estimate", "log10_estimate", "ci95"});
  std::vector<double> Ms;
  if (sweep) {
    const Grid grid = parse_grid(o.grid_text);
    for (double p : grid.points)
      Ms.push_back(codebook_size(o.n, grid_rate_to_nats(o, p)));
  } else {
    if (!(o.M >= 2.0) || o.M != std::floor(o.M))
      throw std::invalid_argument("--M must be an integer >= 2");
    Ms.push_back(o.M);
  }
  for (size_t i = 0; i < Ms.size(); ++i) {
    mdx::McQuery qi = q;
    qi.M = Ms[i];
    const mdx::McResult res = mdx::montecarlo_pe(qi);
    std::vector<std::string> row;
    if (sweep)
      push_rate_cells(o, row,
                      std::log(Ms[i]) / static_cast<double>(o.n));
    row.push_back(fmt(o.n));
    row.push_back(fmt(Ms[i]));
    row.push_back(fmt(res.trials));
    row.push_back(fmt(static_cast<long long>(res.seed)));
    row.push_back(fmt(res.errors));
    row.push_back(fmt(res.estimate));
    row.push_back(fmt(std::log10(res.estimate)));
    row.push_back(fmt(res.ci95));
    tab.rows.push_back(std::move(row));
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  nlohmann::json man = base_manifest("simulate", o, tab.rows.size(), ms);
  man["ensemble"] = o.ensemble;
  man["trials"] = o.trials;
  write_outputs(tab, o.out, man);
  return 0;
}

int run_validate(const CommonOpts& o) {
  const mdx::ChannelTriple t = mdx::load_channel_config(o.channel);
  t.validate();
  std::printf("channel: OK (inputs=%d, outputs=%d)\n", t.num_inputs(),
              t.num_outputs());
  const mdx::AssumptionReport rep = t.assumptions();
  std::printf("regularity: %s\n", rep.regularity_ok ? "true" : "false");
  std::printf("informative_outputs:");
  for (int y : rep.informative_outputs) std::printf(" %d", y);
  std::printf("\n");
  if (rep.nonsingular) {
    std::printf("nonsingular: true\n");
  } else {
    std::printf("nonsingular: false; rcuss unavailable, rcu=rcus\n");
  }
  const std::optional<double> s_pin = pinned_s(o);
  const double s = s_pin ? *s_pin : mdx::gmi(t).s_star;
  std::printf("probe_s: %s\n", fmt(s).c_str());
  const mdx::DiscretePmf d = mdx::density_pmf(mdx::make_family(t, s));
  const mdx::LatticeInfo info = mdx::detect_lattice(d);
  if (info.kind == mdx::LatticeInfo::Kind::lattice) {
    std::printf("lattice: true span=%s offset=%s\n", fmt(info.span).c_str(),
                fmt(info.offset).c_str());
  } else if (info.kind == mdx::LatticeInfo::Kind::degenerate) {
    std::printf("lattice: degenerate\n");
  } else {
    std::printf("lattice: false\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Mismatched-decoding toolkit: achievable rates, error exponents, exact "
      "finite-blocklength bounds, and their approximations for discrete "
      "memoryless channels."};
  app.require_subcommand(1);
  CommonOpts o;

  auto add_common = [&](CLI::App* c, bool needs_out) {
    c->add_option("--channel", o.channel, "channel config JSON path")
        ->required();
    if (needs_out)
      c->add_option("--out", o.out, "output CSV path")->required();
    c->add_option("--units", o.units, "rate units: bits, nats, or both")
        ->check(CLI::IsMember({"bits", "nats", "both"}));
    c->add_option("--seed", o.seed, "random seed (simulation only)");
    c->add_option("--s", o.s_text, "metric power: a number or 'auto'");
    c->add_option("--threads", o.threads,
                  "worker threads (0 = hardware concurrency)");
    return c;
  };

  auto* c_rates = add_common(
      app.add_subcommand("rates",
                         "achievable-rate summary (GMI, shift-augmented rate, "
                         "mutual information)"),
      true);
  c_rates->add_flag("--certify", o.certify,
                    "also compute the certified primal upper bound");

  auto* c_exp = add_common(
      app.add_subcommand("exponents",
                         "random-coding exponents over a rate grid"),
      true);
  c_exp->add_option("--grid", o.grid_text, "rate grid START:STOP:STEP")
      ->required();

  auto* c_bounds = add_common(
      app.add_subcommand("bounds",
                         "exact finite-blocklength bounds and approximations "
                         "over a rate grid"),
      true);
  c_bounds->add_option("--grid", o.grid_text, "rate grid START:STOP:STEP")
      ->required();
  c_bounds->add_option("--n", o.n, "blocklength")->required();
  c_bounds->add_flag("--bracket", o.bracket,
                     "emit certified lower/upper columns");
  c_bounds->add_option("--delta-grid", o.delta_grid,
                       "per-letter quantization step (nats)");
  c_bounds->add_option("--budget", o.budget, "state-space budget");
  c_bounds->add_flag("--with-rcuss", o.with_rcuss,
                     "add the exact sharpened bound column");
  c_bounds->add_flag("--with-log-term", o.with_log_term,
                     "include the half-log correction in the normal column");

  auto* c_approx = add_common(
      app.add_subcommand("approx",
                         "factorized approximations only (fast, no exact "
                         "bounds) over a rate grid"),
      true);
  c_approx->add_option("--grid", o.grid_text, "rate grid START:STOP:STEP")
      ->required();
  c_approx->add_option("--n", o.n, "blocklength")->required();

  auto* c_invert = add_common(
      app.add_subcommand("invert",
                         "largest rate meeting a target error probability, "
                         "per blocklength"),
      true);
  c_invert->add_option("--grid", o.grid_text, "blocklength grid START:STOP:STEP")
      ->required();
  c_invert->add_option("--eps", o.eps, "target error probability")->required();
  c_invert->add_option("--targets", o.targets,
                       "comma list: rcu,rcus,rcuss,rcushat,rcusshat,normal,"
                       "normal_log,exponent");
  c_invert->add_option("--budget", o.budget, "state-space budget");

  auto* c_sim = add_common(
      app.add_subcommand("simulate",
                         "Monte-Carlo decoder simulation (deterministic for "
                         "a fixed seed)"),
      true);
  c_sim->add_option("--n", o.n, "blocklength")->required();
  c_sim->add_option("--M", o.M, "codeword count (single-point mode)");
  c_sim->add_option("--grid", o.grid_text,
                    "optional rate grid (overrides --M)");
  c_sim->add_option("--trials", o.trials, "number of trials");
  c_sim->add_option("--ensemble", o.ensemble, "iid, cc, or cost")
      ->check(CLI::IsMember({"iid", "cc", "cost"}));
  c_sim->add_option("--cost-delta", o.cost_delta,
                    "cost window half-width (cost ensemble)");

  auto* c_val = add_common(
      app.add_subcommand("validate-config",
                         "validate a channel config and report its "
                         "structural properties"),
      false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_rates->parsed()) return run_rates(o);
    if (c_exp->parsed()) return run_exponents(o);
    if (c_bounds->parsed()) return run_bounds(o);
    if (c_approx->parsed()) return run_approx(o);
    if (c_invert->parsed()) return run_invert(o);
    if (c_sim->parsed()) return run_simulate(o);
    if (c_val->parsed()) return run_validate(o);
  } catch (const std::invalid_argument& e) {
    const std::string msg = one_line(e.what());
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return msg.rfind("config: ", 0) == 0 ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
