#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gakan/network.hpp"
#include "gakan/types.hpp"

namespace gakan {

// Bounds of the encoding: the largest decodable network is
// [n, u, ..., u, m] with max_depth mask layers.
struct SearchSpace {
  int inputs = 2;
  int outputs = 1;
  int max_depth = 4;   // d
  int max_width = 5;   // u, neurons per hidden layer
  int grid_bits = 6;   // values 1..2^grid_bits
  int depth_bits = 2;  // depths 1..2^depth_bits, clamped to max_depth
};

using Chromosome = std::vector<std::uint8_t>;  // one bit per entry

// One connection block of the layout: `upper` neuron groups of `lower` bits,
// neuron-major, starting at `offset` in the chromosome.
struct BlockLayout {
  int offset = 0;
  int lower = 0;
  int upper = 0;
  int bits() const { return lower * upper; }
};

std::vector<BlockLayout> connection_layout(const SearchSpace& space);
int connection_bits(const SearchSpace& space);
int chromosome_length(const SearchSpace& space);

struct DecodedNet {
  KanSpec spec;
  bool valid = false;
  int target_depth = 1;     // from the depth bits, clamped
  int effective_depth = 0;  // after degradation
  std::vector<std::pair<int, int>> pruned_neurons;  // (layer, neuron)
};

// Total over all well-formed bit strings: never throws for a chromosome of
// the right length, invalid topologies come back with valid = false.
DecodedNet decode(const SearchSpace& space, const Chromosome& chromosome);

// True iff every output neuron is reachable from at least one input.
bool validity(const KanSpec& spec);

Chromosome random_chromosome(const SearchSpace& space, std::mt19937_64& rng);

std::string bits_string(const Chromosome& chromosome);
Chromosome parse_bits(const std::string& bits);

// Genome file: {space, bits, decoded{layer_sizes, masks, grid, depth, valid}}.
std::string genome_json(const SearchSpace& space, const Chromosome& chromosome,
                        const DecodedNet& decoded);

}  // namespace gakan
