#include "jscq/baseline/ldpc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "jscq/rng.hpp"

namespace jscq {

const char* to_string(CodeRate rate) {
  switch (rate) {
    case CodeRate::r1_3: return "1/3";
    case CodeRate::r1_2: return "1/2";
    case CodeRate::r2_3: return "2/3";
  }
  return "?";
}

CodeRate parse_code_rate(const std::string& text) {
  if (text == "1/3") return CodeRate::r1_3;
  if (text == "1/2") return CodeRate::r1_2;
  if (text == "2/3") return CodeRate::r2_3;
  throw std::invalid_argument("unknown code rate '" + text + "' (expected 1/3, 1/2 or 2/3)");
}

double nominal_rate(CodeRate rate) {
  switch (rate) {
    case CodeRate::r1_3: return 1.0 / 3.0;
    case CodeRate::r1_2: return 0.5;
    case CodeRate::r2_3: return 2.0 / 3.0;
  }
  return 0.0;
}

LdpcCode LdpcCode::from_columns(std::size_t m, std::vector<std::vector<std::uint32_t>> columns) {
  const std::size_t n = columns.size();
  if (n == 0 || m == 0 || m >= n) throw std::invalid_argument("ldpc: need 0 < m < n");
  for (auto& col : columns) {
    std::sort(col.begin(), col.end());
    if (std::adjacent_find(col.begin(), col.end()) != col.end())
      throw std::invalid_argument("ldpc: repeated check index in a column");
    for (auto r : col)
      if (r >= m) throw std::invalid_argument("ldpc: check index out of range");
  }

  // Dense copy of H for elimination over GF(2).
  const std::size_t nw = (n + 63) / 64;
  std::vector<std::uint64_t> dense(m * nw, 0);
  auto row = [&](std::size_t r) { return dense.data() + r * nw; };
  for (std::size_t j = 0; j < n; ++j)
    for (auto r : columns[j]) row(r)[j / 64] |= std::uint64_t{1} << (j % 64);

  // Reduced row echelon form, choosing pivots from the rightmost columns.
  std::vector<std::size_t> pivot_col;
  std::size_t rank = 0;
  for (std::size_t jj = n; jj-- > 0 && rank < m;) {
    const std::uint64_t bit = std::uint64_t{1} << (jj % 64);
    std::size_t r = rank;
    while (r < m && !(row(r)[jj / 64] & bit)) ++r;
    if (r == m) continue;
    if (r != rank) std::swap_ranges(row(r), row(r) + nw, row(rank));
    for (std::size_t o = 0; o < m; ++o)
      if (o != rank && (row(o)[jj / 64] & bit))
        for (std::size_t w = 0; w < nw; ++w) row(o)[w] ^= row(rank)[w];
    pivot_col.push_back(jj);
    ++rank;
  }

  std::vector<bool> is_pivot(n, false);
  for (auto c : pivot_col) is_pivot[c] = true;
  std::vector<std::size_t> order;  // new position -> old column
  for (std::size_t j = 0; j < n; ++j)
    if (!is_pivot[j]) order.push_back(j);
  const std::size_t k = order.size();
  std::vector<std::size_t> sorted_pivots(pivot_col.begin(), pivot_col.end());
  std::sort(sorted_pivots.begin(), sorted_pivots.end());
  order.insert(order.end(), sorted_pivots.begin(), sorted_pivots.end());
  std::vector<std::size_t> new_pos(n);
  for (std::size_t p = 0; p < n; ++p) new_pos[order[p]] = p;

  LdpcCode code;
  code.dimension_ = k;
  code.words_ = (k + 63) / 64;
  code.columns_.resize(n);
  for (std::size_t p = 0; p < n; ++p) code.columns_[p] = columns[order[p]];
  code.rows_.assign(m, {});
  for (std::size_t p = 0; p < n; ++p)
    for (auto r : code.columns_[p]) code.rows_[r].push_back(static_cast<std::uint32_t>(p));

  code.parity_rows_.assign(rank * code.words_, 0);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t t = new_pos[pivot_col[i]] - k;
    std::uint64_t* dst = code.parity_rows_.data() + t * code.words_;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_pivot[j] || !((row(i)[j / 64] >> (j % 64)) & 1u)) continue;
      const std::size_t p = new_pos[j];
      dst[p / 64] |= std::uint64_t{1} << (p % 64);
    }
  }

  code.check_start_.push_back(0);
  for (std::size_t r = 0; r < m; ++r) {
    for (auto v : code.rows_[r]) code.edge_var_.push_back(v);
    code.check_start_.push_back(static_cast<std::uint32_t>(code.edge_var_.size()));
  }
  std::vector<std::vector<std::uint32_t>> by_var(n);
  for (std::uint32_t e = 0; e < code.edge_var_.size(); ++e) by_var[code.edge_var_[e]].push_back(e);
  code.var_start_.push_back(0);
  for (auto& list : by_var) {
    code.var_edges_.insert(code.var_edges_.end(), list.begin(), list.end());
    code.var_start_.push_back(static_cast<std::uint32_t>(code.var_edges_.size()));
  }
  return code;
}

std::vector<std::uint8_t> LdpcCode::encode(std::span<const std::uint8_t> info) const {
  if (info.size() != dimension_)
    throw std::invalid_argument("ldpc encode: expected " + std::to_string(dimension_) + " info bits, got " +
                                std::to_string(info.size()));
  std::vector<std::uint64_t> packed(words_, 0);
  for (std::size_t i = 0; i < info.size(); ++i)
    if (info[i] & 1u) packed[i / 64] |= std::uint64_t{1} << (i % 64);
  std::vector<std::uint8_t> cw(info.begin(), info.end());
  cw.resize(length());
  const std::size_t parity = length() - dimension_;
  for (std::size_t t = 0; t < parity; ++t) {
    const std::uint64_t* g = parity_rows_.data() + t * words_;
    int ones = 0;
    for (std::size_t w = 0; w < words_; ++w) ones += std::popcount(g[w] & packed[w]);
    cw[dimension_ + t] = static_cast<std::uint8_t>(ones & 1);
  }
  return cw;
}

bool LdpcCode::is_codeword(std::span<const std::uint8_t> bits) const {
  if (bits.size() != length()) return false;
  for (const auto& r : rows_) {
    unsigned s = 0;
    for (auto v : r) s ^= bits[v] & 1u;
    if (s) return false;
  }
  return true;
}

std::size_t LdpcCode::four_cycles() const {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> shared;
  for (const auto& col : columns_)
    for (std::size_t a = 0; a < col.size(); ++a)
      for (std::size_t b = a + 1; b < col.size(); ++b) ++shared[{col[a], col[b]}];
  std::size_t cycles = 0;
  for (const auto& [pair, c] : shared) cycles += c * (c - 1) / 2;
  return cycles;
}

LdpcCode make_ldpc(std::size_t n, std::size_t m, std::uint64_t seed) {
  constexpr std::size_t kColumnWeight = 3;
  if (m < kColumnWeight || m >= n) throw std::invalid_argument("make_ldpc: need 3 <= m < n");
  Rng rng(seed, 0x1d9c);
  std::vector<std::size_t> degree(m, 0);
  std::vector<std::vector<bool>> linked(m, std::vector<bool>(m, false));  // rows sharing a column
  std::vector<std::vector<std::uint32_t>> columns(n);
  std::vector<std::uint32_t> candidates;
  for (std::size_t j = 0; j < n; ++j) {
    auto& col = columns[j];
    for (std::size_t w = 0; w < kColumnWeight; ++w) {
      for (int relax = 0; relax < 2; ++relax) {
        candidates.clear();
        std::size_t best = SIZE_MAX;
        for (std::uint32_t r = 0; r < m; ++r) {
          if (std::find(col.begin(), col.end(), r) != col.end()) continue;
          if (!relax && std::any_of(col.begin(), col.end(), [&](std::uint32_t c) { return linked[c][r]; })) continue;
          if (degree[r] < best) {
            best = degree[r];
            candidates.clear();
          }
          if (degree[r] == best) candidates.push_back(r);
        }
        if (!candidates.empty()) break;
      }
      const auto r = candidates[rng.below(candidates.size())];
      for (auto c : col) linked[c][r] = linked[r][c] = true;
      col.push_back(r);
      ++degree[r];
    }
  }
  return LdpcCode::from_columns(m, std::move(columns));
}

const StandardCode& standard_code(CodeRate rate) {
  static const StandardCode codes[] = {
      {CodeRate::r1_3, 1024, 683, 0x1d9c0103, "ldpc/n1024_r1-3.alist"},
      {CodeRate::r1_2, 1024, 512, 0x1d9c0102, "ldpc/n1024_r1-2.alist"},
      {CodeRate::r2_3, 1024, 341, 0x1d9c0203, "ldpc/n1024_r2-3.alist"},
  };
  return codes[static_cast<int>(rate)];
}

LdpcCode make_standard_code(CodeRate rate) {
  const auto& s = standard_code(rate);
  return make_ldpc(s.n, s.m, s.seed);
}

std::string default_data_dir() {
  if (const char* env = std::getenv("JSCQ_DATA_DIR"); env && *env) return env;
#ifdef JSCQ_DATA_DIR
  return JSCQ_DATA_DIR;
#else
  return "data";
#endif
}

LdpcCode load_standard_code(CodeRate rate, const std::string& data_dir) {
  const std::string dir = data_dir.empty() ? default_data_dir() : data_dir;
  return load_alist(dir + "/" + standard_code(rate).file);
}

void write_alist(std::ostream& out, const LdpcCode& code) {
  const auto& cols = code.columns();
  const auto& rows = code.rows();
  std::size_t max_c = 0, max_r = 0;
  for (const auto& c : cols) max_c = std::max(max_c, c.size());
  for (const auto& r : rows) max_r = std::max(max_r, r.size());
  out << code.length() << ' ' << code.checks() << '\n' << max_c << ' ' << max_r << '\n';
  auto weights = [&](const auto& lists) {
    for (std::size_t i = 0; i < lists.size(); ++i) out << (i ? " " : "") << lists[i].size();
    out << '\n';
  };
  weights(cols);
  weights(rows);
  auto entries = [&](const auto& lists, std::size_t width) {
    for (const auto& l : lists) {
      for (std::size_t i = 0; i < width; ++i) out << (i ? " " : "") << (i < l.size() ? l[i] + 1 : 0);
      out << '\n';
    }
  };
  entries(cols, max_c);
  entries(rows, max_r);
}

LdpcCode read_alist(std::istream& in) {
  auto next = [&](const char* what) {
    long v;
    if (!(in >> v) || v < 0) throw std::runtime_error(std::string("alist: bad or missing ") + what);
    return static_cast<std::size_t>(v);
  };
  const std::size_t n = next("n"), m = next("m");
  const std::size_t max_c = next("max column weight"), max_r = next("max row weight");
  std::vector<std::size_t> cw(n), rw(m);
  for (auto& w : cw) w = next("column weight");
  for (auto& w : rw) w = next("row weight");
  std::vector<std::vector<std::uint32_t>> columns(n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < max_c; ++i) {
      const std::size_t r = next("column entry");
      if (r == 0) continue;
      if (r > m) throw std::runtime_error("alist: check index " + std::to_string(r) + " exceeds m");
      columns[j].push_back(static_cast<std::uint32_t>(r - 1));
    }
  for (std::size_t j = 0; j < n; ++j)
    if (columns[j].size() != cw[j]) throw std::runtime_error("alist: column " + std::to_string(j) + " weight mismatch");
  // Row lists must agree with the column lists.
  std::vector<std::size_t> seen(m, 0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < max_r; ++i) {
      const std::size_t v = next("row entry");
      if (v == 0) continue;
      if (v > n || std::find(columns[v - 1].begin(), columns[v - 1].end(), r) == columns[v - 1].end())
        throw std::runtime_error("alist: row " + std::to_string(r) + " disagrees with the column lists");
      ++seen[r];
    }
  for (std::size_t r = 0; r < m; ++r)
    if (seen[r] != rw[r]) throw std::runtime_error("alist: row " + std::to_string(r) + " weight mismatch");
  return LdpcCode::from_columns(m, std::move(columns));
}

void save_alist(const std::string& path, const LdpcCode& code) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_alist(out, code);
}

LdpcCode load_alist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open alist file '" + path + "'");
  return read_alist(in);
}

std::vector<std::uint8_t> ldpc_encode(std::span<const std::uint8_t> bits, const LdpcCode& code) {
  const std::size_t k = code.dimension();
  const std::size_t blocks = std::max<std::size_t>(1, (bits.size() + k - 1) / k);
  std::vector<std::uint8_t> out;
  out.reserve(blocks * code.length());
  std::vector<std::uint8_t> info(k);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::fill(info.begin(), info.end(), 0);
    for (std::size_t i = 0; i < k && b * k + i < bits.size(); ++i) info[i] = bits[b * k + i];
    auto cw = code.encode(info);
    out.insert(out.end(), cw.begin(), cw.end());
  }
  return out;
}

LdpcDecodeResult ldpc_decode(std::span<const double> llrs, const LdpcCode& code, std::size_t max_iters) {
  const std::size_t n = code.length();
  if (llrs.size() != n)
    throw std::invalid_argument("ldpc decode: expected " + std::to_string(n) + " LLRs, got " +
                                std::to_string(llrs.size()));
  for (double l : llrs)
    if (!std::isfinite(l)) throw std::invalid_argument("ldpc decode: non-finite LLR");

  constexpr double kTanhClip = 1.0 - 1e-12;
  const std::size_t edges = code.edge_var_.size();
  std::vector<double> v2c(edges), c2v(edges, 0.0), t(edges);
  for (std::size_t e = 0; e < edges; ++e) v2c[e] = llrs[code.edge_var_[e]];

  LdpcDecodeResult res;
  res.bits.resize(n);
  std::vector<double> prefix;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    for (std::size_t c = 0; c + 1 < code.check_start_.size(); ++c) {
      const std::size_t b = code.check_start_[c], e_end = code.check_start_[c + 1];
      const std::size_t deg = e_end - b;
      prefix.assign(deg + 1, 1.0);
      for (std::size_t i = 0; i < deg; ++i) {
        t[b + i] = std::tanh(std::clamp(v2c[b + i], -40.0, 40.0) / 2.0);
        prefix[i + 1] = prefix[i] * t[b + i];
      }
      double suffix = 1.0;
      for (std::size_t i = deg; i-- > 0;) {
        const double p = std::clamp(prefix[i] * suffix, -kTanhClip, kTanhClip);
        c2v[b + i] = 2.0 * std::atanh(p);
        suffix *= t[b + i];
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      double total = llrs[v];
      for (std::size_t i = code.var_start_[v]; i < code.var_start_[v + 1]; ++i) total += c2v[code.var_edges_[i]];
      for (std::size_t i = code.var_start_[v]; i < code.var_start_[v + 1]; ++i) {
        const auto e = code.var_edges_[i];
        v2c[e] = total - c2v[e];
      }
      res.bits[v] = total < 0.0 ? 1 : 0;
    }
    res.iterations = it;
    if (code.is_codeword(res.bits)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace jscq
