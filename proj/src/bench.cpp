#include "croco/bench.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <omp.h>

#include "croco/error.hpp"

namespace croco {

namespace {

constexpr std::uint64_t kEvalTag = 0xE7A1ULL;
constexpr std::uint64_t kNoCell = ~0ULL;

std::string num(double v) { return fmt::format("{:.6g}", v); }

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

// NA sorts before any value.
auto key(const SweepRecord& r) {
  return std::make_tuple(static_cast<int>(r.method), r.variance.has_value(),
                         r.variance.value_or(0.0), r.target.has_value(), r.target.value_or(0.0),
                         r.instance);
}

std::vector<SweepRecord> sorted(std::span<const SweepRecord> records) {
  if (records.empty()) throw ConfigError("bench", "records", "nothing to emit");
  std::vector<SweepRecord> out(records.begin(), records.end());
  std::stable_sort(out.begin(), out.end(), record_less);
  return out;
}

struct Moments {
  double mean = 0.0;
  std::optional<double> sd;
};

Moments moments(const std::vector<double>& values) {
  Moments m;
  for (const double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("bench", "out", "cannot open " + path.string() + " for writing");
  writer(out);
}

}  // namespace

bool record_less(const SweepRecord& a, const SweepRecord& b) { return key(a) < key(b); }

SweepRecord evaluate(const MlpClassifier& model, const Vector& x, const GenerationResult& result,
                     std::size_t k_eval, const NoiseSpec& spec, std::uint64_t stream) {
  SweepRecord r;
  r.method = result.method;
  r.validity = model.predict_class(result.x_cf) != model.predict_class(x) ? 1 : 0;
  r.distance = (result.x_cf - x).lpNorm<1>();
  r.gamma_eval = invalidation_rate_mc(model, result.x_cf, spec, k_eval, stream);
  r.bound = result.estimate.upper_bound;
  r.converged = result.converged;
  return r;
}

std::vector<SweepRecord> run_sweep(const MlpClassifier& model, std::span<const Vector> instances,
                                   const SweepOptions& options) {
  if (options.grid.variances.empty()) {
    throw ConfigError("bench", "variances", "the variance grid is empty");
  }
  if (options.jobs < 1) throw ConfigError("bench", "jobs", "must be >= 1");
  const bool needs_targets = std::any_of(options.methods.begin(), options.methods.end(),
                                         [](Method m) { return m != Method::Wachter; });
  if (needs_targets && options.grid.targets.empty()) {
    throw ConfigError("bench", "targets", "the target grid is empty");
  }

  struct Task {
    Method method;
    std::size_t variance;  // kNoCell for Wachter: evaluated under every variance
    std::size_t target;
    std::size_t instance;
  };
  std::vector<Task> tasks;
  for (const Method method : options.methods) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (method == Method::Wachter) {
        tasks.push_back({method, kNoCell, kNoCell, i});
        continue;
      }
      for (std::size_t v = 0; v < options.grid.variances.size(); ++v) {
        for (std::size_t t = 0; t < options.grid.targets.size(); ++t) {
          tasks.push_back({method, v, t, i});
        }
      }
    }
  }

  auto noise_for = [&](std::size_t v) {
    NoiseSpec spec = options.base.noise;
    spec.scale = options.grid.variances[v];
    spec.seed = options.base_seed;
    return spec;
  };

  auto run_task = [&](const Task& task) {
    const Vector& x = instances[task.instance];
    const auto method_id = static_cast<std::uint64_t>(task.method);
    GenerationConfig config = options.base;
    config.method = task.method;
    config.record_trace = false;
    config.noise = noise_for(task.variance == kNoCell ? 0 : task.variance);
    if (task.target != kNoCell) config.target = options.grid.targets[task.target];
    config.stream = stream_key({options.base_seed, method_id, task.variance, task.target,
                                static_cast<std::uint64_t>(task.instance)});
    const auto result = generate(model, x, config);

    std::vector<SweepRecord> out;
    const std::size_t v_begin = task.variance == kNoCell ? 0 : task.variance;
    const std::size_t v_end =
        task.variance == kNoCell ? options.grid.variances.size() : task.variance + 1;
    for (std::size_t v = v_begin; v < v_end; ++v) {
      const NoiseSpec spec = noise_for(v);
      GenerationResult scored = result;
      if (task.variance == kNoCell) {
        scored.estimate = estimate_robustness(
            model, result.x_cf, spec, config.samples, config.tightness,
            stream_key({config.stream, static_cast<std::uint64_t>(v)}));
      }
      const auto eval_stream = stream_key({options.base_seed, kEvalTag, method_id, v, task.target,
                                           static_cast<std::uint64_t>(task.instance)});
      auto record = evaluate(model, x, scored, options.k_eval, spec, eval_stream);
      record.variance = options.grid.variances[v];
      if (task.target != kNoCell) record.target = options.grid.targets[task.target];
      record.instance = task.instance;
      out.push_back(record);
    }
    return out;
  };

  std::vector<std::vector<SweepRecord>> slots(tasks.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto n_tasks = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic) num_threads(options.jobs)
  for (std::ptrdiff_t i = 0; i < n_tasks; ++i) {
    try {
      slots[static_cast<std::size_t>(i)] = run_task(tasks[static_cast<std::size_t>(i)]);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepRecord> records;
  for (auto& slot : slots) records.insert(records.end(), slot.begin(), slot.end());
  std::stable_sort(records.begin(), records.end(), record_less);
  return records;
}

void write_tradeoff(std::span<const SweepRecord> records, std::ostream& out) {
  const auto rows = sorted(records);
  out << "method,variance,target,count,mean_distance,sd_distance,mean_gamma,sd_gamma\n";
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    std::vector<double> distance;
    std::vector<double> gamma;
    while (j < rows.size() && rows[j].method == rows[i].method &&
           rows[j].variance == rows[i].variance && rows[j].target == rows[i].target) {
      distance.push_back(rows[j].distance);
      gamma.push_back(rows[j].gamma_eval);
      ++j;
    }
    const auto d = moments(distance);
    const auto g = moments(gamma);
    out << to_string(rows[i].method) << ',' << num(rows[i].variance) << ',' << num(rows[i].target)
        << ',' << distance.size() << ',' << num(d.mean) << ',' << num(d.sd) << ',' << num(g.mean)
        << ',' << num(g.sd) << '\n';
    i = j;
  }
}

void write_validity_heatmap(std::span<const SweepRecord> records, std::ostream& out) {
  const auto rows = sorted(records);
  std::set<double> variances;
  using RowKey = std::tuple<int, bool, double>;  // method, has target, target
  std::map<RowKey, std::map<double, std::pair<int, int>>> cells;  // variance -> (valid, count)
  std::map<RowKey, std::pair<int, int>> no_variance;
  for (const auto& r : rows) {
    const RowKey row{static_cast<int>(r.method), r.target.has_value(), r.target.value_or(0.0)};
    auto& cell = r.variance ? cells[row][*r.variance] : no_variance[row];
    if (r.variance) variances.insert(*r.variance);
    cell.first += r.validity;
    cell.second += 1;
    cells.try_emplace(row);
  }
  out << "method,target";
  for (const double v : variances) out << ',' << num(v);
  if (!no_variance.empty()) out << ",NA";
  out << '\n';
  for (const auto& [row, by_variance] : cells) {
    out << to_string(static_cast<Method>(std::get<0>(row))) << ','
        << (std::get<1>(row) ? num(std::get<2>(row)) : std::string("NA"));
    auto percent = [](const std::pair<int, int>& c) { return num(100.0 * c.first / c.second); };
    for (const double v : variances) {
      const auto it = by_variance.find(v);
      out << ',' << (it == by_variance.end() ? std::string("NA") : percent(it->second));
    }
    if (!no_variance.empty()) {
      const auto it = no_variance.find(row);
      out << ',' << (it == no_variance.end() ? std::string("NA") : percent(it->second));
    }
    out << '\n';
  }
}

void write_target_comparison(std::span<const SweepRecord> records, std::ostream& out) {
  const auto rows = sorted(records);
  out << "method,variance,target,instance,gamma_eval\n";
  for (const auto& r : rows) {
    if (!r.target) continue;
    out << to_string(r.method) << ',' << num(r.variance) << ',' << num(r.target) << ','
        << r.instance << ',' << num(r.gamma_eval) << '\n';
  }
}

void write_bound_check(std::span<const SweepRecord> records, std::ostream& out) {
  const auto rows = sorted(records);
  out << "method,variance,target,instance,bound,gamma_eval,converged\n";
  for (const auto& r : rows) {
    out << to_string(r.method) << ',' << num(r.variance) << ',' << num(r.target) << ','
        << r.instance << ',' << num(r.bound) << ',' << num(r.gamma_eval) << ','
        << (r.converged ? 1 : 0) << '\n';
  }
}

void emit_tradeoff(std::span<const SweepRecord> records, const std::filesystem::path& path) {
  sorted(records);
  write_file(path, [&](std::ostream& out) { write_tradeoff(records, out); });
}

void emit_validity_heatmap(std::span<const SweepRecord> records,
                           const std::filesystem::path& path) {
  sorted(records);
  write_file(path, [&](std::ostream& out) { write_validity_heatmap(records, out); });
}

void emit_target_comparison(std::span<const SweepRecord> records,
                            const std::filesystem::path& path) {
  sorted(records);
  write_file(path, [&](std::ostream& out) { write_target_comparison(records, out); });
}

void emit_bound_check(std::span<const SweepRecord> records, const std::filesystem::path& path) {
  sorted(records);
  write_file(path, [&](std::ostream& out) { write_bound_check(records, out); });
}

}  // namespace croco
