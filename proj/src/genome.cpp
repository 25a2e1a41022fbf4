#include "gakan/genome.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace gakan {

namespace {

void check_space(const SearchSpace& s) {
  if (s.inputs < 1 || s.outputs < 1 || s.max_depth < 1 || s.max_width < 1 ||
      s.grid_bits < 1 || s.depth_bits < 1)
    throw std::invalid_argument("SearchSpace: all dimensions must be >= 1");
  if (s.grid_bits > 7)
    throw std::invalid_argument("SearchSpace: grid_bits > 7 exceeds grid cap");
}

// MSB-first unsigned read of a bit slice.
int read_bits(const Chromosome& c, int offset, int count) {
  int v = 0;
  for (int i = 0; i < count; ++i) v = (v << 1) | c[static_cast<std::size_t>(offset + i)];
  return v;
}

}  // namespace

std::vector<BlockLayout> connection_layout(const SearchSpace& space) {
  check_space(space);
  std::vector<BlockLayout> blocks;
  int offset = 0;
  for (int b = 0; b < space.max_depth; ++b) {
    BlockLayout bl;
    bl.offset = offset;
    bl.lower = (b == 0) ? space.inputs : space.max_width;
    bl.upper = (b == space.max_depth - 1) ? space.outputs : space.max_width;
    offset += bl.bits();
    blocks.push_back(bl);
  }
  return blocks;
}

int connection_bits(const SearchSpace& space) {
  int total = 0;
  for (const auto& b : connection_layout(space)) total += b.bits();
  return total;
}

int chromosome_length(const SearchSpace& space) {
  return connection_bits(space) + space.grid_bits + space.depth_bits;
}

namespace {

// Mask for one block: rows = upper neurons, cols = lower neurons.
MaskMatrix block_mask(const Chromosome& c, const BlockLayout& b) {
  MaskMatrix m(b.upper, b.lower);
  for (int j = 0; j < b.upper; ++j)
    for (int i = 0; i < b.lower; ++i)
      m(j, i) = c[static_cast<std::size_t>(b.offset + j * b.lower + i)];
  return m;
}

struct Reachability {
  std::vector<std::vector<char>> from_input;  // per layer node
  std::vector<std::vector<char>> to_output;
};

Reachability reachability(const KanSpec& spec) {
  const auto& sizes = spec.layer_sizes;
  const int depth = spec.depth();
  Reachability r;
  r.from_input.resize(sizes.size());
  r.to_output.resize(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    r.from_input[l].assign(static_cast<std::size_t>(sizes[l]), 0);
    r.to_output[l].assign(static_cast<std::size_t>(sizes[l]), 0);
  }
  std::fill(r.from_input[0].begin(), r.from_input[0].end(), 1);
  for (int l = 0; l < depth; ++l) {
    const MaskMatrix& m = spec.masks[static_cast<std::size_t>(l)];
    for (Index j = 0; j < m.rows(); ++j)
      for (Index i = 0; i < m.cols(); ++i)
        if (m(j, i) && r.from_input[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)])
          r.from_input[static_cast<std::size_t>(l) + 1][static_cast<std::size_t>(j)] = 1;
  }
  std::fill(r.to_output.back().begin(), r.to_output.back().end(), 1);
  for (int l = depth - 1; l >= 0; --l) {
    const MaskMatrix& m = spec.masks[static_cast<std::size_t>(l)];
    for (Index j = 0; j < m.rows(); ++j)
      for (Index i = 0; i < m.cols(); ++i)
        if (m(j, i) && r.to_output[static_cast<std::size_t>(l) + 1][static_cast<std::size_t>(j)])
          r.to_output[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] = 1;
  }
  return r;
}

}  // namespace

DecodedNet decode(const SearchSpace& space, const Chromosome& chromosome) {
  if (static_cast<int>(chromosome.size()) != chromosome_length(space))
    throw std::invalid_argument("decode: chromosome length mismatch");
  const auto blocks = connection_layout(space);
  const int conn = connection_bits(space);

  DecodedNet net;
  net.spec.grid = read_bits(chromosome, conn, space.grid_bits) + 1;
  const int raw_depth = read_bits(chromosome, conn + space.grid_bits,
                                  space.depth_bits) + 1;
  net.target_depth = std::min(raw_depth, space.max_depth);

  const int n = space.inputs, m = space.outputs, u = space.max_width;
  const int target = net.target_depth;

  std::vector<int> sizes;
  std::vector<MaskMatrix> masks;

  if (target == 1) {
    if (space.max_depth > 1 && m > u) {
      // no m-wide slice of the first block exists; unusable topology
      net.spec.layer_sizes = {n, m};
      net.spec.masks = {MaskMatrix::Zero(m, n)};
      net.valid = false;
      net.effective_depth = 1;
      return net;
    }
    sizes = {n, m};
    const MaskMatrix full = block_mask(chromosome, blocks[0]);
    masks = {full.topRows(m)};  // first m neuron groups of block 1
  } else {
    sizes.push_back(n);
    for (int l = 1; l < target; ++l) sizes.push_back(u);
    sizes.push_back(m);
    for (int b = 0; b + 1 < target; ++b)
      masks.push_back(block_mask(chromosome, blocks[static_cast<std::size_t>(b)]));
    // output block re-attached to the last surviving hidden layer
    masks.push_back(block_mask(chromosome, blocks.back()));
  }

  // degradation: an all-zero block drops its (hidden) layer when the
  // neighbouring widths allow re-splicing the chain
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = 0; b + 1 < masks.size(); ++b) {
      if (masks[b].sum() != 0) continue;
      if (masks[b + 1].cols() != sizes[b]) continue;  // shape-incompatible
      masks.erase(masks.begin() + static_cast<long>(b));
      sizes.erase(sizes.begin() + static_cast<long>(b) + 1);
      changed = true;
      break;
    }
  }

  net.spec.layer_sizes = sizes;
  net.spec.masks = std::move(masks);
  net.effective_depth = net.spec.depth();

  // prune neurons lacking an input or output path
  Reachability r = reachability(net.spec);
  for (int l = 1; l < net.spec.depth(); ++l) {
    for (int i = 0; i < net.spec.layer_sizes[static_cast<std::size_t>(l)]; ++i) {
      const bool alive = r.from_input[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] &&
                         r.to_output[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      if (alive) continue;
      MaskMatrix& in = net.spec.masks[static_cast<std::size_t>(l) - 1];
      MaskMatrix& out = net.spec.masks[static_cast<std::size_t>(l)];
      if (in.row(i).sum() == 0 && out.col(i).sum() == 0) continue;  // already bare
      in.row(i).setZero();
      out.col(i).setZero();
      net.pruned_neurons.emplace_back(l, i);
    }
  }

  net.valid = validity(net.spec);
  net.spec.valid = net.valid;
  return net;
}

bool validity(const KanSpec& spec) {
  const Reachability r = reachability(spec);
  for (char reachable : r.from_input.back())
    if (!reachable) return false;
  return true;
}

Chromosome random_chromosome(const SearchSpace& space, std::mt19937_64& rng) {
  const int len = chromosome_length(space);
  std::uniform_int_distribution<int> coin(0, 1);
  Chromosome c(static_cast<std::size_t>(len));
  for (auto& bit : c) bit = static_cast<std::uint8_t>(coin(rng));
  return c;
}

std::string bits_string(const Chromosome& chromosome) {
  std::string s;
  s.reserve(chromosome.size());
  for (auto b : chromosome) s.push_back(b ? '1' : '0');
  return s;
}

Chromosome parse_bits(const std::string& bits) {
  Chromosome c;
  c.reserve(bits.size());
  for (char ch : bits) {
    if (ch != '0' && ch != '1')
      throw std::invalid_argument("parse_bits: bits must be 0/1");
    c.push_back(ch == '1');
  }
  return c;
}

std::string genome_json(const SearchSpace& space, const Chromosome& chromosome,
                        const DecodedNet& decoded) {
  nlohmann::json j;
  j["space"] = {{"inputs", space.inputs},       {"outputs", space.outputs},
                {"max_depth", space.max_depth}, {"max_width", space.max_width},
                {"grid_bits", space.grid_bits}, {"depth_bits", space.depth_bits}};
  j["bits"] = bits_string(chromosome);
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& m : decoded.spec.masks) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    masks.push_back(std::move(rows));
  }
  j["decoded"] = {{"layer_sizes", decoded.spec.layer_sizes},
                  {"masks", std::move(masks)},
                  {"grid", decoded.spec.grid},
                  {"depth", decoded.effective_depth},
                  {"target_depth", decoded.target_depth},
                  {"valid", decoded.valid}};
  return j.dump(2);
}

}  // namespace gakan
