#ifndef GCS_CONSTELLATION_HPP
#define GCS_CONSTELLATION_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcs {

/// A labeled multi-dimensional constellation: M = 2^m points of N real
/// coordinates with distinct m-bit labels. Bit position k ∈ [0, m) is the
/// k-th character of the label string (MSB-first in the packed integer).
struct LabeledConstellation {
    int dims = 0;                      // N (real dimensions)
    int bits = 0;                      // m
    std::vector<double> pts;           // M*N, row-major
    std::vector<std::uint32_t> labels; // M entries, m bits each

    bool normalized = false;
    double norm_target = 0.0; // declared E[||X||^2] when normalized

    // Per-real-dimension PAM decomposition, filled only when the labeling
    // splits into independent Gray-coded groups per axis (square-QAM
    // products). Enables the per-dimension max-log LLR fast path.
    struct PamAxis {
        int bit_offset = 0; // first label bit position owned by this axis
        int bit_count = 0;
        std::vector<double> levels;        // ascending
        std::vector<std::uint32_t> codes;  // code of levels[i]
    };
    std::vector<PamAxis> axes; // size N when present, else empty
    bool product = false;      // built as a cartesian product
    int os_sign_bits = 0;      // N for orthant-expanded constellations

    int order() const { return static_cast<int>(labels.size()); }
    const double* point(int i) const { return &pts[static_cast<std::size_t>(i) * dims]; }
    double* point(int i) { return &pts[static_cast<std::size_t>(i) * dims]; }
    int label_bit(int i, int k) const { return (labels[i] >> (bits - 1 - k)) & 1u; }

    std::string label_string(int i) const {
        std::string s(bits, '0');
        for (int k = 0; k < bits; ++k)
            s[k] = static_cast<char>('0' + label_bit(i, k));
        return s;
    }

    double energy(int i) const {
        const double* p = point(i);
        double e = 0.0;
        for (int n = 0; n < dims; ++n)
            e += p[n] * p[n];
        return e;
    }

    double mean_energy() const {
        double s = 0.0;
        for (int i = 0; i < order(); ++i)
            s += energy(i);
        return s / order();
    }

    void validate() const {
        const int m_count = order();
        if (m_count < 2 || (m_count & (m_count - 1)) != 0)
            throw std::invalid_argument("constellation: point count must be a power of two >= 2");
        int mm = 0;
        while ((1 << mm) < m_count)
            ++mm;
        if (mm != bits)
            throw std::invalid_argument("constellation: 2^bits != point count");
        if (pts.size() != static_cast<std::size_t>(m_count) * dims || dims < 1)
            throw std::invalid_argument("constellation: bad coordinate array");
        for (double v : pts)
            if (!std::isfinite(v))
                throw std::invalid_argument("constellation: non-finite coordinate");
        std::set<std::uint32_t> seen(labels.begin(), labels.end());
        if (seen.size() != labels.size())
            throw std::invalid_argument("constellation: duplicate labels");
        if (normalized) {
            const double e = mean_energy();
            if (std::fabs(e - norm_target) > 1e-12 * norm_target)
                throw std::invalid_argument("constellation: normalization flag violated");
        }
    }
};

/// First-orthant generator set for orthant-symmetric constellations:
/// M/2^N strictly positive points with (m-N)-bit labels.
struct FirstOrthantSet {
    int dims = 0;
    int bits = 0; // m - N (may be 0)
    std::vector<double> pts;
    std::vector<std::uint32_t> labels;

    int count() const { return static_cast<int>(labels.size()); }
    const double* point(int i) const { return &pts[static_cast<std::size_t>(i) * dims]; }
};

struct ShapingMetrics {
    double papr = 0.0;
    std::vector<double> phi2; // per complex dimension
    double phi4 = 0.0;
    double psi = 0.0;
    double dmin2 = 0.0;
};

/// Rescale to mean energy = target (default: 1 per complex dimension).
inline LabeledConstellation normalize(LabeledConstellation c, double target = -1.0) {
    if (target <= 0.0)
        target = c.dims / 2.0;
    const double e = c.mean_energy();
    if (e <= 0.0)
        throw std::invalid_argument("normalize: zero-power constellation");
    const double s = std::sqrt(target / e);
    for (double& v : c.pts)
        v *= s;
    for (auto& ax : c.axes)
        for (double& lv : ax.levels)
            lv *= s;
    c.normalized = true;
    c.norm_target = target;
    return c;
}

namespace detail {

inline std::uint32_t gray_code(std::uint32_t i) { return i ^ (i >> 1); }

/// Gray-coded PAM axis with 2^b odd-integer levels -(L-1)..(L-1). Codes run
/// Gray-sequentially from the positive end so the all-zero code sits on the
/// positive side (matching the sign-bit convention: 0 <-> positive).
inline LabeledConstellation::PamAxis gray_pam_axis(int b, int bit_offset) {
    LabeledConstellation::PamAxis ax;
    ax.bit_offset = bit_offset;
    ax.bit_count = b;
    const int L = 1 << b;
    for (int i = 0; i < L; ++i) {
        ax.levels.push_back(static_cast<double>(2 * i - (L - 1)));
        ax.codes.push_back(gray_code(static_cast<std::uint32_t>(L - 1 - i)));
    }
    return ax;
}

} // namespace detail

/// Square QAM (even bits): per-axis Gray labeling, I bits then Q bits.
/// Cross QAM (odd bits >= 5): standard cross grid, quasi-Gray labels by
/// row-major Gray-sequence assignment. bits=1 is BPSK on the I axis;
/// bits=3 is a 4x2 rectangle.
inline LabeledConstellation make_qam(int m_2d) {
    if (m_2d < 1 || m_2d > 12)
        throw std::invalid_argument("make_qam: bits per 2D must be in [1, 12]");
    LabeledConstellation c;
    c.dims = 2;
    c.bits = m_2d;

    if (m_2d == 1) {
        c.pts = {-1.0, 0.0, 1.0, 0.0};
        c.labels = {1u, 0u};
        LabeledConstellation::PamAxis ax0;
        ax0.bit_offset = 0;
        ax0.bit_count = 1;
        ax0.levels = {-1.0, 1.0};
        ax0.codes = {1u, 0u};
        LabeledConstellation::PamAxis ax1;
        ax1.bit_offset = 1;
        ax1.bit_count = 0;
        ax1.levels = {0.0};
        ax1.codes = {0u};
        c.axes = {ax0, ax1};
        return normalize(std::move(c), 1.0);
    }

    if (m_2d % 2 == 0) {
        const int b = m_2d / 2;
        auto axi = detail::gray_pam_axis(b, 0);
        auto axq = detail::gray_pam_axis(b, b);
        const int L = 1 << b;
        for (int a = 0; a < L; ++a)
            for (int q = 0; q < L; ++q) {
                c.pts.push_back(axi.levels[a]);
                c.pts.push_back(axq.levels[q]);
                c.labels.push_back((axi.codes[a] << b) | axq.codes[q]);
            }
        c.axes = {axi, axq};
        return normalize(std::move(c), 1.0);
    }

    // Odd bits: cross (or 4x2 rectangle for bits=3), row-major quasi-Gray.
    std::vector<std::pair<double, double>> grid;
    if (m_2d == 3) {
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 4; ++x)
                grid.emplace_back(2 * x - 3, 2 * y - 1);
    } else {
        const int w = 3 << ((m_2d - 3) / 2);     // outer square width
        const int k = 1 << ((m_2d - 5) / 2);     // excluded corner size
        for (int yi = 0; yi < w; ++yi)
            for (int xi = 0; xi < w; ++xi) {
                const bool corner_x = xi < k || xi >= w - k;
                const bool corner_y = yi < k || yi >= w - k;
                if (corner_x && corner_y)
                    continue;
                grid.emplace_back(2 * xi - (w - 1), 2 * yi - (w - 1));
            }
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        c.pts.push_back(grid[i].first);
        c.pts.push_back(grid[i].second);
        c.labels.push_back(detail::gray_code(static_cast<std::uint32_t>(i)));
    }
    return normalize(std::move(c), 1.0);
}

/// 2^m points equally spaced on the unit circle, Gray-labeled in angle order.
inline LabeledConstellation make_psk(int m) {
    if (m < 1 || m > 12)
        throw std::invalid_argument("make_psk: bits must be in [1, 12]");
    LabeledConstellation c;
    c.dims = 2;
    c.bits = m;
    const int M = 1 << m;
    for (int i = 0; i < M; ++i) {
        const double phi = 2.0 * M_PI * i / M + M_PI / M;
        c.pts.push_back(std::cos(phi));
        c.pts.push_back(std::sin(phi));
        c.labels.push_back(detail::gray_code(static_cast<std::uint32_t>(i)));
    }
    return normalize(std::move(c), 1.0);
}

/// S = A x B with concatenated labels (A's bits first). Inputs must share the
/// same per-2D power so the product is uniformly scaled.
inline LabeledConstellation cartesian_product(const LabeledConstellation& a,
                                              const LabeledConstellation& b) {
    if (!a.normalized || !b.normalized)
        throw std::invalid_argument("cartesian_product: inputs must be normalized");
    const double pa = a.norm_target / (a.dims / 2.0);
    const double pb = b.norm_target / (b.dims / 2.0);
    if (std::fabs(pa - pb) > 1e-9 * pa)
        throw std::invalid_argument("cartesian_product: per-2D powers differ");
    LabeledConstellation c;
    c.dims = a.dims + b.dims;
    c.bits = a.bits + b.bits;
    for (int i = 0; i < a.order(); ++i)
        for (int j = 0; j < b.order(); ++j) {
            for (int n = 0; n < a.dims; ++n)
                c.pts.push_back(a.point(i)[n]);
            for (int n = 0; n < b.dims; ++n)
                c.pts.push_back(b.point(j)[n]);
            c.labels.push_back((a.labels[i] << b.bits) | b.labels[j]);
        }
    c.product = true;
    if (!a.axes.empty() && !b.axes.empty()) {
        c.axes = a.axes;
        for (auto ax : b.axes) {
            ax.bit_offset += a.bits;
            c.axes.push_back(std::move(ax));
        }
    }
    c.normalized = true;
    c.norm_target = a.norm_target + b.norm_target;
    return c;
}

/// Fold a first-orthant set into all 2^N orthants. Sign bits occupy the final
/// N label positions (position m-N+j for dimension j), value 0 <-> positive.
inline LabeledConstellation expand_orthant(const FirstOrthantSet& s1) {
    const int n = s1.dims;
    if (n < 1 || n > 16)
        throw std::invalid_argument("expand_orthant: bad dimension count");
    for (double v : s1.pts)
        if (!(v > 0.0))
            throw std::invalid_argument(
                "expand_orthant: coordinates must be strictly positive (zero folds ambiguously)");
    LabeledConstellation c;
    c.dims = n;
    c.bits = s1.bits + n;
    const int patterns = 1 << n;
    for (int j = 0; j < s1.count(); ++j) {
        for (int pat = 0; pat < patterns; ++pat) {
            for (int d = 0; d < n; ++d) {
                const bool neg = (pat >> (n - 1 - d)) & 1;
                c.pts.push_back(neg ? -s1.point(j)[d] : s1.point(j)[d]);
            }
            c.labels.push_back((s1.labels[j] << n) | static_cast<std::uint32_t>(pat));
        }
    }
    c.os_sign_bits = n;
    return c;
}

/// Recover the first-orthant generator of an orthant-expanded constellation.
inline FirstOrthantSet first_orthant(const LabeledConstellation& c) {
    if (c.os_sign_bits != c.dims || c.dims < 1)
        throw std::invalid_argument("first_orthant: constellation is not orthant-expanded");
    FirstOrthantSet s1;
    s1.dims = c.dims;
    s1.bits = c.bits - c.dims;
    for (int i = 0; i < c.order(); ++i) {
        if ((c.labels[i] & ((1u << c.dims) - 1u)) != 0u)
            continue; // keep the all-positive pattern only
        for (int n = 0; n < c.dims; ++n)
            s1.pts.push_back(c.point(i)[n]);
        s1.labels.push_back(c.labels[i] >> c.dims);
    }
    return s1;
}

/// Set-partitioned PM-QAM: even-lattice-parity subsets of a 4D QAM product.
/// m=7: half of PM-16QAM (single parity); m=6: quarter (per-polarization
/// parities); m=5: eighth (additional cross-polarization parity); m=9: half
/// of PM-32QAM. For the Gray-coded square parents each parity is an XOR of
/// label bits, so labels keep the parent's free bit positions.
inline LabeledConstellation make_sp_qam(int m) {
    if (m != 5 && m != 6 && m != 7 && m != 9)
        throw std::invalid_argument("make_sp_qam: bits per 4D must be 5, 6, 7 or 9");
    const LabeledConstellation q = make_qam(m == 9 ? 5 : 4);
    const LabeledConstellation parent = cartesian_product(q, q);

    // Lattice index of every coordinate = rank of the value on its axis.
    std::vector<std::vector<double>> uniq(parent.dims);
    for (int d = 0; d < parent.dims; ++d) {
        for (int i = 0; i < parent.order(); ++i)
            uniq[d].push_back(parent.point(i)[d]);
        std::sort(uniq[d].begin(), uniq[d].end());
        uniq[d].erase(std::unique(uniq[d].begin(), uniq[d].end()), uniq[d].end());
    }
    auto lattice_index = [&](int i, int d) {
        const auto& u = uniq[d];
        return static_cast<int>(std::lower_bound(u.begin(), u.end(),
                                                 parent.point(i)[d] - 1e-12) -
                                u.begin());
    };

    std::vector<int> keep;
    for (int i = 0; i < parent.order(); ++i) {
        const int u0 = lattice_index(i, 0), u1 = lattice_index(i, 1);
        const int u2 = lattice_index(i, 2), u3 = lattice_index(i, 3);
        bool ok = (u0 + u1 + u2 + u3) % 2 == 0;
        if (m == 6 || m == 5)
            ok = (u0 + u1) % 2 == 0 && (u2 + u3) % 2 == 0;
        if (m == 5)
            ok = ok && (u0 + u2) % 2 == 0;
        if (ok)
            keep.push_back(i);
    }

    LabeledConstellation c;
    c.dims = 4;
    c.bits = m;
    auto parent_bit = [&](int i, int k) { return parent.label_bit(i, k); };

    std::vector<int> free_bits; // parent label positions kept, MSB-first
    if (m == 7)
        free_bits = {0, 1, 2, 3, 4, 5, 6};
    else if (m == 6)
        free_bits = {0, 1, 2, 4, 5, 6};
    else if (m == 5)
        free_bits = {0, 1, 2, 4, 6};
    if (!free_bits.empty()) {
        for (int i : keep) {
            std::uint32_t lab = 0;
            for (int k : free_bits)
                lab = (lab << 1) | static_cast<std::uint32_t>(parent_bit(i, k));
            c.labels.push_back(lab);
            for (int n = 0; n < 4; ++n)
                c.pts.push_back(parent.point(i)[n]);
        }
    } else {
        // Cross-QAM parent (m=9): parity is not an XOR of label bits. Drop
        // the first bit position that keeps all truncated labels distinct,
        // falling back to sequential labels.
        int drop = -1;
        for (int k = 0; k < parent.bits && drop < 0; ++k) {
            std::set<std::uint32_t> seen;
            bool ok = true;
            for (int i : keep) {
                std::uint32_t lab = 0;
                for (int kk = 0; kk < parent.bits; ++kk)
                    if (kk != k)
                        lab = (lab << 1) | static_cast<std::uint32_t>(parent_bit(i, kk));
                if (!seen.insert(lab).second) {
                    ok = false;
                    break;
                }
            }
            if (ok)
                drop = k;
        }
        std::uint32_t next = 0;
        for (int i : keep) {
            std::uint32_t lab;
            if (drop >= 0) {
                lab = 0;
                for (int kk = 0; kk < parent.bits; ++kk)
                    if (kk != drop)
                        lab = (lab << 1) | static_cast<std::uint32_t>(parent_bit(i, kk));
            } else {
                lab = next++;
            }
            c.labels.push_back(lab);
            for (int n = 0; n < 4; ++n)
                c.pts.push_back(parent.point(i)[n]);
        }
    }
    return normalize(std::move(c), 2.0);
}

inline double min_squared_distance(const LabeledConstellation& c) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < c.order(); ++i)
        for (int j = i + 1; j < c.order(); ++j) {
            double d = 0.0;
            for (int n = 0; n < c.dims; ++n) {
                const double t = c.point(i)[n] - c.point(j)[n];
                d += t * t;
            }
            best = std::min(best, d);
        }
    return best;
}

inline ShapingMetrics metrics(const LabeledConstellation& c) {
    const double e1 = c.mean_energy();
    if (e1 <= 0.0)
        throw std::invalid_argument("metrics: zero-power constellation");
    ShapingMetrics sm;
    double e2 = 0.0, emax = 0.0;
    for (int i = 0; i < c.order(); ++i) {
        const double e = c.energy(i);
        e2 += e * e;
        emax = std::max(emax, e);
    }
    e2 /= c.order();
    sm.papr = emax / e1;
    sm.phi4 = e2 / (e1 * e1);
    sm.psi = e1 * (sm.phi4 - 1.0);
    for (int d = 0; d + 1 < c.dims; d += 2) {
        double m2 = 0.0, m4 = 0.0;
        for (int i = 0; i < c.order(); ++i) {
            const double re = c.point(i)[d], im = c.point(i)[d + 1];
            const double a2 = re * re + im * im;
            m2 += a2;
            m4 += a2 * a2;
        }
        m2 /= c.order();
        m4 /= c.order();
        sm.phi2.push_back(m4 / (m2 * m2));
    }
    sm.dmin2 = min_squared_distance(c);
    return sm;
}

/// All nearest-neighbor pairs differ in exactly one label bit.
inline bool is_gray(const LabeledConstellation& c) {
    const double d2 = min_squared_distance(c);
    for (int i = 0; i < c.order(); ++i)
        for (int j = i + 1; j < c.order(); ++j) {
            double d = 0.0;
            for (int n = 0; n < c.dims; ++n) {
                const double t = c.point(i)[n] - c.point(j)[n];
                d += t * t;
            }
            if (d < d2 * (1.0 + 1e-9) &&
                __builtin_popcount(c.labels[i] ^ c.labels[j]) != 1)
                return false;
        }
    return true;
}

// ---- Exchange format ------------------------------------------------------
// One point per line: "<label bits> <coord_1> ... <coord_N>"; '#' comments;
// the header records N, M and the normalization target.

namespace detail {

/// Shortest decimal form that round-trips the exact double.
inline std::string shortest(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline void write_constellation(const LabeledConstellation& c, const std::string& path) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("write_constellation: cannot open " + path);
    f << "# constellation exchange format\n";
    f << "# N = " << c.dims << "\n";
    f << "# M = " << c.order() << "\n";
    if (c.normalized)
        f << "# normalization_target = " << detail::shortest(c.norm_target) << "\n";
    if (c.os_sign_bits > 0)
        f << "# orthant_sign_bits = " << c.os_sign_bits << "\n";
    for (int i = 0; i < c.order(); ++i) {
        f << c.label_string(i);
        for (int n = 0; n < c.dims; ++n)
            f << ' ' << detail::shortest(c.point(i)[n]);
        f << '\n';
    }
    if (!f)
        throw std::runtime_error("write_constellation: write failed for " + path);
}

inline LabeledConstellation read_constellation(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("read_constellation: cannot open " + path);
    LabeledConstellation c;
    c.dims = -1;
    double norm_target = -1.0;
    int sign_bits = 0;
    std::string line;
    while (std::getline(f, line)) {
        std::size_t pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos)
            continue;
        if (line[pos] == '#') {
            std::istringstream hs(line.substr(pos + 1));
            std::string key, eq;
            double val;
            if (hs >> key >> eq >> val && eq == "=") {
                if (key == "normalization_target")
                    norm_target = val;
                else if (key == "orthant_sign_bits")
                    sign_bits = static_cast<int>(val);
            }
            continue;
        }
        std::istringstream ls(line);
        std::string lab;
        ls >> lab;
        for (char ch : lab)
            if (ch != '0' && ch != '1')
                throw std::invalid_argument("read_constellation: bad label '" + lab + "'");
        std::vector<double> coords;
        double v;
        while (ls >> v)
            coords.push_back(v);
        if (c.dims < 0) {
            c.dims = static_cast<int>(coords.size());
            c.bits = static_cast<int>(lab.size());
        }
        if (static_cast<int>(coords.size()) != c.dims ||
            static_cast<int>(lab.size()) != c.bits)
            throw std::invalid_argument("read_constellation: inconsistent field counts");
        std::uint32_t packed = 0;
        for (char ch : lab)
            packed = (packed << 1) | static_cast<std::uint32_t>(ch - '0');
        c.labels.push_back(packed);
        for (double x : coords)
            c.pts.push_back(x);
    }
    if (c.order() == 0)
        throw std::invalid_argument("read_constellation: no points in " + path);
    if (norm_target > 0) {
        c.normalized = true;
        c.norm_target = norm_target;
    }
    c.os_sign_bits = sign_bits;
    c.validate();
    return c;
}

} // namespace gcs

#endif
