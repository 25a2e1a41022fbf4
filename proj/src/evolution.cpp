#include "gakan/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace gakan {

std::optional<double> EvalCache::lookup(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void EvalCache::store(const std::string& key, double fitness) {
  std::lock_guard<std::mutex> lock(mu_);
  map_[key] = fitness;
}

std::size_t EvalCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return map_.size();
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void fill_summary(Individual& ind, const DecodedNet& net) {
  ind.valid = net.valid;
  ind.active_edges = net.spec.active_edges();
  ind.layer_sizes = net.spec.layer_sizes;
  ind.grid = net.spec.grid;
}

double train_fitness(const DecodedNet& net, const EvalContext& ctx,
                     std::uint64_t model_seed) {
  try {
    KanModel model = init_model(net.spec, ctx.train->features, model_seed);
    const TrainReport report =
        train(model, *ctx.train, *ctx.val, ctx.train_config);
    return report.min_val_loss;
  } catch (const std::exception&) {
    return kInf;  // a broken candidate must not abort the generation
  }
}

}  // namespace

double evaluate(Individual& ind, const EvalContext& ctx, EvalCache& cache) {
  const DecodedNet net = decode(*ctx.space, ind.chromosome);
  fill_summary(ind, net);

  const std::string key = bits_string(ind.chromosome);
  if (auto hit = cache.lookup(key)) {
    ind.fitness = *hit;
    ind.evaluated = true;
    return ind.fitness;
  }

  double fitness = kInf;
  if (net.valid) {
    const std::uint64_t model_seed =
        mix_seed(ctx.run_seed, fnv1a(key.data(), key.size()));
    fitness = train_fitness(net, ctx, model_seed);
  }
  cache.store(key, fitness);
  ind.fitness = fitness;
  ind.evaluated = true;
  return fitness;
}

std::pair<Individual, Individual> crossover(const Individual& p1,
                                            const Individual& p2,
                                            const SearchSpace& space,
                                            std::mt19937_64& rng,
                                            const GaConfig& config) {
  if (p1.chromosome.size() != p2.chromosome.size())
    throw std::invalid_argument("crossover: chromosome length mismatch");

  Individual c1, c2;
  c1.chromosome = p1.chromosome;
  c2.chromosome = p2.chromosome;

  std::bernoulli_distribution trigger(config.crossover_rate);
  if (!trigger(rng)) return {std::move(c1), std::move(c2)};

  std::bernoulli_distribution swap_group(config.neuron_swap_prob);
  for (const auto& block : connection_layout(space)) {
    for (int j = 0; j < block.upper; ++j) {
      if (!swap_group(rng)) continue;
      const int off = block.offset + j * block.lower;
      for (int i = 0; i < block.lower; ++i)
        std::swap(c1.chromosome[static_cast<std::size_t>(off + i)],
                  c2.chromosome[static_cast<std::size_t>(off + i)]);
    }
  }

  // grid+depth tail: single-point crossover
  const int conn = connection_bits(space);
  const int tail = space.grid_bits + space.depth_bits;
  if (tail >= 2) {
    std::uniform_int_distribution<int> cut_dist(1, tail - 1);
    const int cut = cut_dist(rng);
    for (int i = conn + cut; i < conn + tail; ++i)
      std::swap(c1.chromosome[static_cast<std::size_t>(i)],
                c2.chromosome[static_cast<std::size_t>(i)]);
  }
  return {std::move(c1), std::move(c2)};
}

Individual mutate(const Individual& ind, std::mt19937_64& rng,
                  const GaConfig& config) {
  Individual out;
  out.chromosome = ind.chromosome;
  std::bernoulli_distribution trigger(config.mutation_rate);
  if (!trigger(rng)) return out;

  const double p = config.per_bit_flip_prob >= 0.0
                       ? config.per_bit_flip_prob
                       : 1.0 / static_cast<double>(out.chromosome.size());
  if (p <= 0.0) return out;
  std::bernoulli_distribution flip(std::min(p, 1.0));
  for (auto& bit : out.chromosome)
    if (flip(rng)) bit = static_cast<std::uint8_t>(1 - bit);
  return out;
}

std::vector<Individual> select_survivors(const std::vector<Individual>& parents,
                                         const std::vector<Individual>& offspring,
                                         const GaConfig& config) {
  std::vector<Individual> pool;
  pool.reserve(parents.size() + offspring.size());
  pool.insert(pool.end(), parents.begin(), parents.end());
  pool.insert(pool.end(), offspring.begin(), offspring.end());
  for (const auto& ind : pool)
    if (!ind.evaluated)
      throw std::invalid_argument("select_survivors: unevaluated individual");

  std::stable_sort(pool.begin(), pool.end(),
                   [](const Individual& a, const Individual& b) {
                     if (a.fitness != b.fitness) return a.fitness < b.fitness;
                     return a.active_edges < b.active_edges;
                   });
  pool.resize(static_cast<std::size_t>(
      std::min<std::size_t>(pool.size(), static_cast<std::size_t>(config.population))));
  return pool;
}

namespace {

// Evaluates a batch; duplicates and prior cache entries count as hits and
// each unique new bit string is trained exactly once, so the counters do not
// depend on the worker count.
void evaluate_population(std::vector<Individual>& pop, const EvalContext& ctx,
                         EvalCache& cache, int workers, long* evaluations,
                         long* cache_hits) {
  std::vector<std::size_t> first_of_key;  // indices that must actually compute
  std::unordered_map<std::string, std::size_t> seen;
  long hits = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const std::string key = bits_string(pop[i].chromosome);
    if (cache.lookup(key) || seen.count(key)) {
      ++hits;
      continue;
    }
    seen.emplace(key, i);
    first_of_key.push_back(i);
  }

  if (workers <= 1 || first_of_key.size() <= 1) {
    for (std::size_t i : first_of_key) evaluate(pop[i], ctx, cache);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t t = next.fetch_add(1);
        if (t >= first_of_key.size()) return;
        evaluate(pop[first_of_key[t]], ctx, cache);
      }
    };
    std::vector<std::thread> threads;
    const int n_threads =
        std::min<int>(workers, static_cast<int>(first_of_key.size()));
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // replay cached results for duplicates and prior entries
  for (auto& ind : pop)
    if (!ind.evaluated) evaluate(ind, ctx, cache);

  *evaluations += static_cast<long>(first_of_key.size());
  *cache_hits += hits;
}

std::size_t tournament(const std::vector<Individual>& pop,
                       std::mt19937_64& rng, int size) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  std::size_t best = pick(rng);
  for (int t = 1; t < size; ++t) {
    const std::size_t challenger = pick(rng);
    if (pop[challenger].fitness < pop[best].fitness) best = challenger;
  }
  return best;
}

GenerationStats population_stats(const std::vector<Individual>& pop, int gen) {
  GenerationStats s;
  s.generation = gen;
  double sum = 0.0;
  long finite = 0;
  for (const auto& ind : pop) {
    s.min_fitness = std::min(s.min_fitness, ind.fitness);
    if (std::isfinite(ind.fitness)) {
      sum += ind.fitness;
      ++finite;
    }
  }
  if (finite > 0) s.mean_fitness = sum / static_cast<double>(finite);
  return s;
}

}  // namespace

GaResult run(const SearchSpace& space, const Dataset& train_set,
             const Dataset& val_set, const GaConfig& config,
             const TrainConfig& train_config) {
  if (config.population < 2 || config.population % 2 != 0)
    throw std::invalid_argument("run: population must be even and >= 2");
  if (config.generations < 1)
    throw std::invalid_argument("run: generations must be >= 1");
  for (double rate : {config.crossover_rate, config.mutation_rate,
                      config.neuron_swap_prob})
    if (rate < 0.0 || rate > 1.0)
      throw std::invalid_argument("run: rates must lie in [0, 1]");
  if (train_set.rows() == 0 || val_set.rows() == 0)
    throw std::invalid_argument("run: empty dataset split");
  if (train_set.cols() != space.inputs || val_set.cols() != space.inputs)
    throw std::invalid_argument("run: dataset width does not match the space");

  const auto t0 = std::chrono::steady_clock::now();
  EvalContext ctx;
  ctx.space = &space;
  ctx.train = &train_set;
  ctx.val = &val_set;
  ctx.train_config = train_config;
  ctx.run_seed = config.seed;

  EvalCache cache;
  std::mt19937_64 rng(config.seed);
  GaResult result;

  std::vector<Individual> pop;
  pop.reserve(static_cast<std::size_t>(config.population));
  for (int i = 0; i < config.population; ++i) {
    Individual ind;
    ind.chromosome = random_chromosome(space, rng);
    pop.push_back(std::move(ind));
  }

  long gen_evals = 0, gen_hits = 0;
  evaluate_population(pop, ctx, cache, config.workers, &gen_evals, &gen_hits);

  for (int gen = 1; gen <= config.generations; ++gen) {
    std::vector<Individual> offspring;
    offspring.reserve(static_cast<std::size_t>(config.population));
    while (static_cast<int>(offspring.size()) < config.population) {
      const std::size_t a = tournament(pop, rng, config.tournament_size);
      const std::size_t b = tournament(pop, rng, config.tournament_size);
      auto [c1, c2] = crossover(pop[a], pop[b], space, rng, config);
      offspring.push_back(mutate(c1, rng, config));
      offspring.push_back(mutate(c2, rng, config));
    }
    offspring.resize(static_cast<std::size_t>(config.population));

    evaluate_population(offspring, ctx, cache, config.workers, &gen_evals,
                        &gen_hits);
    pop = select_survivors(pop, offspring, config);

    GenerationStats stats = population_stats(pop, gen);
    stats.evaluations = gen_evals;
    stats.cache_hits = gen_hits;
    result.history.push_back(stats);
    result.evaluations += gen_evals;
    result.cache_hits += gen_hits;
    gen_evals = gen_hits = 0;
  }

  result.best = pop.front();  // survivors are sorted best-first
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

void write_history_csv(const GaResult& result, std::ostream& out) {
  out << "generation,min_fitness,mean_fitness,evaluations,cache_hits\n";
  for (const auto& s : result.history)
    out << s.generation << ',' << s.min_fitness << ',' << s.mean_fitness << ','
        << s.evaluations << ',' << s.cache_hits << '\n';
}

}  // namespace gakan
