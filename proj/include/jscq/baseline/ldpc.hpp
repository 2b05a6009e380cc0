#pragma once

// Binary LDPC codes: construction, alist I/O, systematic encoding and
// flooding sum-product decoding.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace jscq {

enum class CodeRate { r1_3, r1_2, r2_3 };

const char* to_string(CodeRate rate);
CodeRate parse_code_rate(const std::string& text);  // "1/3", "1/2", "2/3"
double nominal_rate(CodeRate rate);

/// Sparse parity-check matrix with a systematic generator. Columns are
/// arranged so that a codeword is [info bits | parity bits]: the last
/// `rank` columns of H are linearly independent.
class LdpcCode {
 public:
  /// Builds the code from H given as one list of check indices per column.
  /// Columns are reordered when needed to make the trailing block invertible.
  static LdpcCode from_columns(std::size_t m, std::vector<std::vector<std::uint32_t>> columns);

  std::size_t length() const { return columns_.size(); }      // n
  std::size_t checks() const { return rows_.size(); }         // m
  std::size_t dimension() const { return dimension_; }        // k = n - rank(H)
  double rate() const { return static_cast<double>(dimension_) / static_cast<double>(length()); }

  const std::vector<std::vector<std::uint32_t>>& columns() const { return columns_; }
  const std::vector<std::vector<std::uint32_t>>& rows() const { return rows_; }

  /// k info bits (0/1) -> n-bit codeword.
  std::vector<std::uint8_t> encode(std::span<const std::uint8_t> info) const;
  bool is_codeword(std::span<const std::uint8_t> bits) const;
  // Number of 4-cycles in the Tanner graph.
  std::size_t four_cycles() const;

 private:
  std::vector<std::vector<std::uint32_t>> columns_;
  std::vector<std::vector<std::uint32_t>> rows_;
  std::size_t dimension_ = 0;
  std::size_t words_ = 0;                    // 64-bit words per info vector
  std::vector<std::uint64_t> parity_rows_;   // (n - k) x words_, row t gives parity bit t

  // Tanner graph edges grouped by check, plus each variable's edge ids.
  std::vector<std::uint32_t> edge_var_, check_start_, var_edges_, var_start_;

  friend struct LdpcDecodeResult ldpc_decode(std::span<const double>, const LdpcCode&, std::size_t);
};

/// Pseudorandom column-weight-3 construction with balanced row weights and
/// greedy 4-cycle avoidance, fully determined by (n, m, seed).
LdpcCode make_ldpc(std::size_t n, std::size_t m, std::uint64_t seed);

/// Parameters of the shipped n = 1024 codes.
struct StandardCode {
  CodeRate rate;
  std::size_t n, m;
  std::uint64_t seed;
  const char* file;  // under the data directory
};
const StandardCode& standard_code(CodeRate rate);
LdpcCode make_standard_code(CodeRate rate);
// Reads the shipped alist file; `data_dir` empty means the configured default.
LdpcCode load_standard_code(CodeRate rate, const std::string& data_dir = {});
std::string default_data_dir();

void write_alist(std::ostream& out, const LdpcCode& code);
LdpcCode read_alist(std::istream& in);
void save_alist(const std::string& path, const LdpcCode& code);
LdpcCode load_alist(const std::string& path);

/// Pads `bits` with zeros to whole blocks of k and encodes each block.
std::vector<std::uint8_t> ldpc_encode(std::span<const std::uint8_t> bits, const LdpcCode& code);

struct LdpcDecodeResult {
  std::vector<std::uint8_t> bits;  // n hard decisions
  bool converged = false;
  std::size_t iterations = 0;
};

/// Flooding sum-product on LLRs ln(P(0)/P(1)). Stops as soon as the hard
/// decision satisfies every check.
LdpcDecodeResult ldpc_decode(std::span<const double> llrs, const LdpcCode& code, std::size_t max_iters = 50);

}  // namespace jscq
