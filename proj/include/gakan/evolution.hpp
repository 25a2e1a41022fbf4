#pragma once

#include <iosfwd>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gakan/data.hpp"
#include "gakan/genome.hpp"
#include "gakan/trainer.hpp"

namespace gakan {

struct GaConfig {
  int population = 100;
  int generations = 20;
  double crossover_rate = 0.9;
  double mutation_rate = 0.5;      // per-individual trigger
  double neuron_swap_prob = 0.5;   // per neuron group, once triggered
  double per_bit_flip_prob = -1.0; // < 0 means 1/b_total
  int tournament_size = 2;
  std::uint64_t seed = 0;
  int workers = 1;  // concurrent fitness evaluations
};

struct Individual {
  Chromosome chromosome;
  double fitness = std::numeric_limits<double>::infinity();
  bool evaluated = false;
  // decoded summary
  bool valid = false;
  long active_edges = 0;
  std::vector<int> layer_sizes;
  int grid = 0;
};

// Fitness by exact bit string; hits replay the originally computed value.
class EvalCache {
 public:
  std::optional<double> lookup(const std::string& key) const;
  void store(const std::string& key, double fitness);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> map_;
};

struct EvalContext {
  const SearchSpace* space = nullptr;
  const Dataset* train = nullptr;
  const Dataset* val = nullptr;
  TrainConfig train_config;
  std::uint64_t run_seed = 0;
};

// Decode -> init (seed mixed from run seed and chromosome digest) -> train;
// invalid topologies and training failures earn +inf, results are cached.
double evaluate(Individual& ind, const EvalContext& ctx, EvalCache& cache);

std::pair<Individual, Individual> crossover(const Individual& p1,
                                            const Individual& p2,
                                            const SearchSpace& space,
                                            std::mt19937_64& rng,
                                            const GaConfig& config);

Individual mutate(const Individual& ind, std::mt19937_64& rng,
                  const GaConfig& config);

// (mu + lambda) truncation; ties prefer fewer active edges, then the earlier
// slot in parents-then-offspring order.
std::vector<Individual> select_survivors(const std::vector<Individual>& parents,
                                         const std::vector<Individual>& offspring,
                                         const GaConfig& config);

struct GenerationStats {
  int generation = 0;
  double min_fitness = std::numeric_limits<double>::infinity();
  double mean_fitness = std::numeric_limits<double>::infinity();  // finite members
  long evaluations = 0;  // trainings actually run this generation
  long cache_hits = 0;
};

struct GaResult {
  Individual best;
  std::vector<GenerationStats> history;
  double wall_seconds = 0.0;
  long evaluations = 0;
  long cache_hits = 0;
};

GaResult run(const SearchSpace& space, const Dataset& train_set,
             const Dataset& val_set, const GaConfig& config,
             const TrainConfig& train_config);

void write_history_csv(const GaResult& result, std::ostream& out);

}  // namespace gakan
