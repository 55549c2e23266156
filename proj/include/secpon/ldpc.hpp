#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "secpon/bits.hpp"
#include "secpon/rng.hpp"

namespace secpon {

/// Sparse GF(2) parity-check matrix in compressed-row form.
struct SparseParityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> row_ptr; // rows + 1
    std::vector<std::uint32_t> col_idx; // one entry per edge

    std::size_t edges() const { return col_idx.size(); }

    static SparseParityMatrix from_rows(std::size_t cols, const std::vector<std::vector<std::uint32_t>>& rows_list)
    {
        SparseParityMatrix h;
        h.rows = rows_list.size();
        h.cols = cols;
        h.row_ptr.reserve(h.rows + 1);
        h.row_ptr.push_back(0);
        for (const auto& r : rows_list) {
            std::vector<std::uint32_t> sorted(r);
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                throw std::invalid_argument("SparseParityMatrix: duplicate entry in a row");
            for (auto c : sorted) {
                if (c >= cols)
                    throw std::invalid_argument("SparseParityMatrix: column index out of range");
                h.col_idx.push_back(c);
            }
            h.row_ptr.push_back(static_cast<std::uint32_t>(h.col_idx.size()));
        }
        return h;
    }

    std::span<const std::uint32_t> row(std::size_t r) const
    {
        return {col_idx.data() + row_ptr[r], col_idx.data() + row_ptr[r + 1]};
    }

    std::vector<std::size_t> column_degrees() const
    {
        std::vector<std::size_t> deg(cols, 0);
        for (auto c : col_idx)
            ++deg[c];
        return deg;
    }

    /// H * c over GF(2), one entry per check.
    BitVec syndrome(std::span<const std::uint8_t> c) const
    {
        if (c.size() != cols)
            throw std::length_error("syndrome: codeword length mismatch");
        BitVec s(rows, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            std::uint8_t acc = 0;
            for (auto v : row(r))
                acc ^= c[v];
            s[r] = acc & 1u;
        }
        return s;
    }

    bool is_codeword(std::span<const std::uint8_t> c) const
    {
        for (std::size_t r = 0; r < rows; ++r) {
            std::uint8_t acc = 0;
            for (auto v : row(r))
                acc ^= c[v];
            if (acc & 1u)
                return false;
        }
        return true;
    }
};

// ---------------------------------------------------------------------------
// Encoders

/// Quasi-cyclic code whose parity part is a weight-3 column followed by a
/// dual-diagonal staircase (the 802.11n / 5G BG style). Codeword layout is
/// [info | p0 | q1 .. q_{mb-1}].
struct QcDualDiagonalEncoder {
    std::size_t z = 0;
    std::size_t base_rows = 0;
    std::size_t info_cols = 0;
    /// For each base row, the (info column, shift) pairs of its circulants.
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> row_entries;
    std::uint32_t hb_shift = 1;
    std::size_t hb_middle_row = 0;

    void encode(std::span<const std::uint8_t> info, std::span<std::uint8_t> cw) const
    {
        const std::size_t k = info_cols * z;
        std::copy(info.begin(), info.end(), cw.begin());
        // lambda_i = sum over info circulants of P^s * info_block
        std::vector<BitVec> lambda(base_rows, BitVec(z, 0));
        for (std::size_t i = 0; i < base_rows; ++i)
            for (auto [col, shift] : row_entries[i]) {
                const std::uint8_t* blk = info.data() + col * z;
                auto& out = lambda[i];
                // (P^s x)[r] = x[(r + s) mod z]
                for (std::size_t r = 0; r < z; ++r)
                    out[r] ^= blk[(r + shift) % z];
            }
        BitVec p0(z, 0);
        for (std::size_t i = 0; i < base_rows; ++i)
            for (std::size_t r = 0; r < z; ++r)
                p0[r] ^= lambda[i][r];
        std::copy(p0.begin(), p0.end(), cw.begin() + static_cast<std::ptrdiff_t>(k));
        // q1 = lambda_0 + P^b p0 ; q_{i+1} = q_i + lambda_i + [i == middle] p0
        BitVec q(z);
        for (std::size_t r = 0; r < z; ++r)
            q[r] = lambda[0][r] ^ p0[(r + hb_shift) % z];
        std::copy(q.begin(), q.end(), cw.begin() + static_cast<std::ptrdiff_t>(k + z));
        for (std::size_t i = 1; i + 1 < base_rows; ++i) {
            for (std::size_t r = 0; r < z; ++r)
                q[r] ^= lambda[i][r] ^ (i == hb_middle_row ? p0[r] : 0);
            std::copy(q.begin(), q.end(), cw.begin() + static_cast<std::ptrdiff_t>(k + (i + 1) * z));
        }
    }
};

/// Generic encoder from the reduced row-echelon form of H. Handles
/// rank-deficient matrices: k = n - rank.
struct DenseSystematicEncoder {
    std::size_t n = 0;
    std::size_t words = 0;
    std::vector<std::uint32_t> pivot_cols;
    std::vector<std::vector<std::uint64_t>> pivot_rows; // RREF rows, pivot bit cleared
    std::vector<std::uint32_t> info_cols;

    static DenseSystematicEncoder build(const SparseParityMatrix& h)
    {
        DenseSystematicEncoder e;
        e.n = h.cols;
        e.words = (h.cols + 63) / 64;
        std::vector<std::vector<std::uint64_t>> rows(h.rows, std::vector<std::uint64_t>(e.words, 0));
        for (std::size_t r = 0; r < h.rows; ++r)
            for (auto c : h.row(r))
                rows[r][c / 64] |= std::uint64_t{1} << (c % 64);

        // Pivot search from the last column so a [info | parity] layout keeps info first.
        std::vector<std::uint8_t> is_pivot(h.cols, 0);
        std::size_t rank = 0;
        for (std::size_t cc = h.cols; cc-- > 0 && rank < h.rows;) {
            const std::size_t w = cc / 64;
            const std::uint64_t bit = std::uint64_t{1} << (cc % 64);
            std::size_t sel = rank;
            while (sel < h.rows && !(rows[sel][w] & bit))
                ++sel;
            if (sel == h.rows)
                continue;
            std::swap(rows[sel], rows[rank]);
            for (std::size_t r = 0; r < h.rows; ++r)
                if (r != rank && (rows[r][w] & bit))
                    for (std::size_t x = 0; x < e.words; ++x)
                        rows[r][x] ^= rows[rank][x];
            e.pivot_cols.push_back(static_cast<std::uint32_t>(cc));
            is_pivot[cc] = 1;
            ++rank;
        }
        rows.resize(rank);
        for (std::size_t r = 0; r < rank; ++r) {
            const auto pc = e.pivot_cols[r];
            rows[r][pc / 64] &= ~(std::uint64_t{1} << (pc % 64));
        }
        e.pivot_rows = std::move(rows);
        for (std::uint32_t c = 0; c < h.cols; ++c)
            if (!is_pivot[c])
                e.info_cols.push_back(c);
        return e;
    }

    void encode(std::span<const std::uint8_t> info, std::span<std::uint8_t> cw) const
    {
        std::fill(cw.begin(), cw.end(), 0);
        std::vector<std::uint64_t> packed(words, 0);
        for (std::size_t i = 0; i < info_cols.size(); ++i) {
            cw[info_cols[i]] = info[i] & 1u;
            if (info[i] & 1u)
                packed[info_cols[i] / 64] |= std::uint64_t{1} << (info_cols[i] % 64);
        }
        for (std::size_t r = 0; r < pivot_rows.size(); ++r) {
            std::uint64_t acc = 0;
            for (std::size_t x = 0; x < words; ++x)
                acc ^= pivot_rows[r][x] & packed[x];
            cw[pivot_cols[r]] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
        }
    }
};

/// LDPC code: parity-check matrix, encoder and decoder settings.
struct LdpcCode {
    SparseParityMatrix h;
    std::vector<std::uint32_t> info_positions;
    std::variant<QcDualDiagonalEncoder, DenseSystematicEncoder> encoder;
    unsigned max_iterations = 50;
    bool early_stop = true;

    std::size_t n() const { return h.cols; }
    std::size_t m() const { return h.rows; }
    std::size_t k() const { return info_positions.size(); }
    double rate() const { return static_cast<double>(k()) / static_cast<double>(n()); }

    /// Builds the code with a generic encoder from any matrix (e.g. loaded from alist).
    static LdpcCode from_matrix(SparseParityMatrix h)
    {
        for (std::size_t r = 0; r < h.rows; ++r)
            if (h.row(r).empty())
                throw std::invalid_argument("LdpcCode: empty check row");
        for (auto d : h.column_degrees())
            if (d == 0)
                throw std::invalid_argument("LdpcCode: zero column");
        LdpcCode c;
        auto enc = DenseSystematicEncoder::build(h);
        c.info_positions = enc.info_cols;
        c.encoder = std::move(enc);
        c.h = std::move(h);
        return c;
    }
};

inline BitVec ldpc_encode(std::span<const std::uint8_t> info, const LdpcCode& code)
{
    if (info.size() != code.k())
        throw std::length_error("ldpc_encode: information length must equal k");
    BitVec cw(code.n(), 0);
    std::visit([&](const auto& e) { e.encode(info, cw); }, code.encoder);
    return cw;
}

// ---------------------------------------------------------------------------
// Quasi-cyclic progressive-edge-growth construction

struct QcPegParams {
    std::size_t z = 384;
    std::size_t base_rows = 7;
    std::size_t base_cols = 45;
    unsigned info_column_weight = 3;
    std::uint64_t seed = 20230917;
};

namespace detail {

struct BaseEntry {
    std::uint32_t row;
    std::uint32_t col;
    std::uint32_t shift;
};

} // namespace detail

/// Quasi-cyclic LDPC code built by progressive edge growth on the base graph.
///
/// The parity part is fixed (weight-3 column plus dual diagonal, all encodable in
/// linear time). Info columns are placed one edge at a time: the check row is
/// the least connected one not already used by the column, and the circulant
/// shift is drawn from those that close no 4-cycle through the new edge,
/// preferring the fewest 6-cycles.
inline LdpcCode build_qc_peg_code(const QcPegParams& prm)
{
    const std::size_t z = prm.z, mb = prm.base_rows, nb = prm.base_cols;
    if (mb < 3 || nb <= mb || z < 2 || prm.info_column_weight < 2 || prm.info_column_weight > mb)
        throw std::invalid_argument("build_qc_peg_code: invalid base dimensions");
    const std::size_t kb = nb - mb;
    const std::uint32_t hb_shift = 1;
    const std::size_t hb_mid = mb / 2;

    // shift[r][c] = -1 for an empty circulant.
    std::vector<std::vector<long>> shift(mb, std::vector<long>(nb, -1));
    shift[0][kb] = hb_shift;
    shift[hb_mid][kb] = 0;
    shift[mb - 1][kb] = hb_shift;
    for (std::size_t i = 0; i + 1 < mb; ++i) {
        shift[i][kb + 1 + i] = 0;
        shift[i + 1][kb + 1 + i] = 0;
    }

    Rng rng(prm.seed, tag("qc-peg"));
    auto mod = [z](long v) { return static_cast<long>(((v % static_cast<long>(z)) + static_cast<long>(z)) % static_cast<long>(z)); };
    std::vector<std::size_t> row_deg(mb, 0);
    for (std::size_t r = 0; r < mb; ++r)
        for (std::size_t c = kb; c < nb; ++c)
            row_deg[r] += shift[r][c] >= 0;

    std::vector<std::uint32_t> bad4(z), bad6(z);
    for (std::size_t col = 0; col < kb; ++col) {
        for (unsigned e = 0; e < prm.info_column_weight; ++e) {
            // least connected row not yet on this column, random tie-break
            std::size_t best_deg = std::numeric_limits<std::size_t>::max();
            std::vector<std::size_t> rows;
            for (std::size_t r = 0; r < mb; ++r) {
                if (shift[r][col] >= 0)
                    continue;
                if (row_deg[r] < best_deg) {
                    best_deg = row_deg[r];
                    rows.clear();
                }
                if (row_deg[r] == best_deg)
                    rows.push_back(r);
            }
            const std::size_t r_new = rows[rng.below(rows.size())];

            std::fill(bad4.begin(), bad4.end(), 0);
            std::fill(bad6.begin(), bad6.end(), 0);
            // Cycles through edge (r_new, col). A cycle alternates rows and columns;
            // it exists in the lift iff the alternating shift sum is 0 mod z.
            // 4-cycle: col -r_new- c2 -r2- col
            for (std::size_t c2 = 0; c2 < nb; ++c2) {
                if (c2 == col || shift[r_new][c2] < 0)
                    continue;
                for (std::size_t r2 = 0; r2 < mb; ++r2) {
                    if (r2 == r_new || shift[r2][c2] < 0)
                        continue;
                    if (shift[r2][col] >= 0) {
                        // s + (-s[r_new][c2] + s[r2][c2] - s[r2][col]) == 0
                        const long need = mod(shift[r_new][c2] - shift[r2][c2] + shift[r2][col]);
                        ++bad4[static_cast<std::size_t>(need)];
                    }
                    // 6-cycle: col -r_new- c2 -r2- c3 -r3- col
                    for (std::size_t c3 = 0; c3 < nb; ++c3) {
                        if (c3 == c2 || c3 == col || shift[r2][c3] < 0)
                            continue;
                        for (std::size_t r3 = 0; r3 < mb; ++r3) {
                            if (r3 == r2 || r3 == r_new || shift[r3][c3] < 0 || shift[r3][col] < 0)
                                continue;
                            const long need = mod(shift[r_new][c2] - shift[r2][c2] + shift[r2][c3] -
                                                  shift[r3][c3] + shift[r3][col]);
                            ++bad6[static_cast<std::size_t>(need)];
                        }
                    }
                }
            }
            std::uint32_t best6 = std::numeric_limits<std::uint32_t>::max();
            std::vector<std::uint32_t> choices;
            for (std::uint32_t s = 0; s < z; ++s) {
                if (bad4[s])
                    continue;
                if (bad6[s] < best6) {
                    best6 = bad6[s];
                    choices.clear();
                }
                if (bad6[s] == best6)
                    choices.push_back(s);
            }
            if (choices.empty())
                throw std::runtime_error("build_qc_peg_code: no 4-cycle-free shift available");
            shift[r_new][col] = choices[rng.below(choices.size())];
            ++row_deg[r_new];
        }
    }

    // Lift: (P^s x)[r] = x[(r + s) mod z], i.e. row r of the circulant has a 1 in column (r + s) mod z.
    std::vector<std::vector<std::uint32_t>> rows(mb * z);
    QcDualDiagonalEncoder enc;
    enc.z = z;
    enc.base_rows = mb;
    enc.info_cols = kb;
    enc.hb_shift = hb_shift;
    enc.hb_middle_row = hb_mid;
    enc.row_entries.resize(mb);
    for (std::size_t br = 0; br < mb; ++br)
        for (std::size_t bc = 0; bc < nb; ++bc) {
            if (shift[br][bc] < 0)
                continue;
            const auto s = static_cast<std::size_t>(shift[br][bc]);
            if (bc < kb)
                enc.row_entries[br].emplace_back(static_cast<std::uint32_t>(bc), static_cast<std::uint32_t>(s));
            for (std::size_t r = 0; r < z; ++r)
                rows[br * z + r].push_back(static_cast<std::uint32_t>(bc * z + (r + s) % z));
        }

    LdpcCode code;
    code.h = SparseParityMatrix::from_rows(nb * z, rows);
    code.info_positions.resize(kb * z);
    std::iota(code.info_positions.begin(), code.info_positions.end(), 0u);
    code.encoder = std::move(enc);
    return code;
}

/// The (17280, 14592) data-channel code: z = 384, 7 x 45 base matrix.
inline const LdpcCode& default_ldpc_code()
{
    static const LdpcCode code = build_qc_peg_code(QcPegParams{});
    return code;
}

// ---------------------------------------------------------------------------
// alist format (MacKay): n m / max col deg, max row deg / col degrees / row degrees /
// per-column 1-based row lists / per-row 1-based column lists, zero padded.

inline SparseParityMatrix read_alist(std::istream& is)
{
    std::size_t n = 0, m = 0, max_c = 0, max_r = 0;
    if (!(is >> n >> m >> max_c >> max_r) || n == 0 || m == 0)
        throw std::runtime_error("read_alist: bad header");
    std::vector<std::size_t> cdeg(n), rdeg(m);
    for (auto& d : cdeg)
        if (!(is >> d) || d > max_c)
            throw std::runtime_error("read_alist: bad column degree");
    for (auto& d : rdeg)
        if (!(is >> d) || d > max_r)
            throw std::runtime_error("read_alist: bad row degree");
    std::vector<std::vector<std::uint32_t>> col_rows(n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < max_c; ++i) {
            long v = 0;
            if (!(is >> v))
                throw std::runtime_error("read_alist: truncated column lists");
            if (v > 0)
                col_rows[c].push_back(static_cast<std::uint32_t>(v - 1));
            else if (i < cdeg[c])
                throw std::runtime_error("read_alist: column list shorter than its degree");
        }
    std::vector<std::vector<std::uint32_t>> rows(m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < max_r; ++i) {
            long v = 0;
            if (!(is >> v))
                throw std::runtime_error("read_alist: truncated row lists");
            if (v > 0) {
                if (static_cast<std::size_t>(v) > n)
                    throw std::runtime_error("read_alist: column index out of range");
                rows[r].push_back(static_cast<std::uint32_t>(v - 1));
            } else if (i < rdeg[r]) {
                throw std::runtime_error("read_alist: row list shorter than its degree");
            }
        }
    // Cross-check both views of the matrix.
    std::size_t from_cols = 0;
    for (std::size_t c = 0; c < n; ++c) {
        if (col_rows[c].size() != cdeg[c])
            throw std::runtime_error("read_alist: column degree mismatch");
        from_cols += col_rows[c].size();
        for (auto r : col_rows[c]) {
            if (r >= m || std::find(rows[r].begin(), rows[r].end(), c) == rows[r].end())
                throw std::runtime_error("read_alist: row and column lists disagree");
        }
    }
    std::size_t from_rows = 0;
    for (std::size_t r = 0; r < m; ++r) {
        if (rows[r].size() != rdeg[r])
            throw std::runtime_error("read_alist: row degree mismatch");
        from_rows += rows[r].size();
    }
    if (from_rows != from_cols)
        throw std::runtime_error("read_alist: row and column lists disagree");
    return SparseParityMatrix::from_rows(n, rows);
}

inline void write_alist(std::ostream& os, const SparseParityMatrix& h)
{
    std::vector<std::vector<std::uint32_t>> col_rows(h.cols);
    std::size_t max_r = 0;
    for (std::size_t r = 0; r < h.rows; ++r) {
        max_r = std::max<std::size_t>(max_r, h.row(r).size());
        for (auto c : h.row(r))
            col_rows[c].push_back(static_cast<std::uint32_t>(r));
    }
    std::size_t max_c = 0;
    for (const auto& cr : col_rows)
        max_c = std::max(max_c, cr.size());
    os << h.cols << ' ' << h.rows << '\n' << max_c << ' ' << max_r << '\n';
    for (std::size_t c = 0; c < h.cols; ++c)
        os << col_rows[c].size() << (c + 1 < h.cols ? ' ' : '\n');
    for (std::size_t r = 0; r < h.rows; ++r)
        os << h.row(r).size() << (r + 1 < h.rows ? ' ' : '\n');
    for (const auto& cr : col_rows) {
        for (std::size_t i = 0; i < max_c; ++i)
            os << (i < cr.size() ? cr[i] + 1 : 0) << (i + 1 < max_c ? ' ' : '\n');
    }
    for (std::size_t r = 0; r < h.rows; ++r) {
        auto row = h.row(r);
        for (std::size_t i = 0; i < max_r; ++i)
            os << (i < row.size() ? row[i] + 1 : 0) << (i + 1 < max_r ? ' ' : '\n');
    }
}

// ---------------------------------------------------------------------------
// Sum-product decoding

struct LdpcDecodeResult {
    BitVec info;
    BitVec codeword;
    bool converged = false;
    unsigned iterations = 0;
};

/// Flooding sum-product decoder in the LLR domain (positive LLR means bit 0).
/// Messages are clipped to |LLR| <= 30. Per-edge buffers are reused across calls.
class LdpcDecoder {
public:
    static constexpr double kClip = 30.0;

    explicit LdpcDecoder(const LdpcCode& code) : code_(&code)
    {
        c2v_.resize(code.h.edges());
        tanh_.resize(code.h.edges());
        total_.resize(code.n());
        hard_.resize(code.n());
        std::size_t max_deg = 0;
        for (std::size_t r = 0; r < code.m(); ++r)
            max_deg = std::max(max_deg, code.h.row(r).size());
        prefix_.resize(max_deg + 1);
    }

    LdpcDecodeResult decode(std::span<const double> llr, unsigned max_iterations)
    {
        const auto& h = code_->h;
        if (llr.size() != h.cols)
            throw std::length_error("ldpc_decode_spa: LLR length must equal n");
        channel_.resize(h.cols);
        for (std::size_t v = 0; v < h.cols; ++v) {
            if (!std::isfinite(llr[v]))
                throw std::invalid_argument("ldpc_decode_spa: LLRs must be finite");
            channel_[v] = std::clamp(llr[v], -kClip, kClip);
        }
        std::fill(c2v_.begin(), c2v_.end(), 0.0);
        std::copy(channel_.begin(), channel_.end(), total_.begin());

        LdpcDecodeResult res;
        harden();
        res.converged = h.is_codeword(hard_);
        while (!(res.converged && code_->early_stop) && res.iterations < max_iterations) {
            iterate();
            ++res.iterations;
            harden();
            res.converged = h.is_codeword(hard_);
        }
        res.codeword = hard_;
        res.info.resize(code_->k());
        for (std::size_t i = 0; i < code_->k(); ++i)
            res.info[i] = hard_[code_->info_positions[i]];
        return res;
    }

    LdpcDecodeResult decode(std::span<const double> llr) { return decode(llr, code_->max_iterations); }

private:
    void harden()
    {
        for (std::size_t v = 0; v < total_.size(); ++v)
            hard_[v] = total_[v] < 0.0 ? 1 : 0;
    }

    void iterate()
    {
        const auto& h = code_->h;
        constexpr double kTanhMax = 0.9999999999999; // atanh bounded well inside the clip
        for (std::size_t r = 0; r < h.rows; ++r) {
            const std::size_t b = h.row_ptr[r], e = h.row_ptr[r + 1];
            const std::size_t deg = e - b;
            // v2c = total - own c2v ; tanh(v2c / 2)
            for (std::size_t i = 0; i < deg; ++i) {
                const double m = std::clamp(total_[h.col_idx[b + i]] - c2v_[b + i], -kClip, kClip);
                tanh_[b + i] = std::tanh(0.5 * m);
            }
            prefix_[0] = 1.0;
            for (std::size_t i = 0; i < deg; ++i)
                prefix_[i + 1] = prefix_[i] * tanh_[b + i];
            double suffix = 1.0;
            for (std::size_t i = deg; i-- > 0;) {
                const double prod = std::clamp(prefix_[i] * suffix, -kTanhMax, kTanhMax);
                suffix *= tanh_[b + i];
                c2v_[b + i] = std::clamp(2.0 * std::atanh(prod), -kClip, kClip);
            }
        }
        std::copy(channel_.begin(), channel_.end(), total_.begin());
        for (std::size_t ed = 0; ed < h.col_idx.size(); ++ed)
            total_[h.col_idx[ed]] += c2v_[ed];
    }

    const LdpcCode* code_;
    std::vector<double> channel_, c2v_, tanh_, total_, prefix_;
    BitVec hard_;
};

inline LdpcDecodeResult ldpc_decode_spa(std::span<const double> llr, const LdpcCode& code)
{
    LdpcDecoder dec(code);
    return dec.decode(llr);
}

} // namespace secpon
