#pragma once

// On-disk formats.
//
// Vector file (.danv), all integers little-endian:
//   "DANV" | u16 version (1) | u8 dtype (1 = f32, 2 = f64) | u32 rows | u32 cols
//   | rows*cols IEEE-754 values, row-major, little-endian
//
// World directory:
//   world.meta        key=value lines (format, dim, noise_std, synthetic)
//   attributes.txt    one attribute name per line, UTF-8
//   concepts.tsv      id <TAB> category <TAB> split <TAB> bitstring, with header row
//   instances/<id>.danv   one vector file per concept, rows are instances
//   render_map.danv   synthetic worlds only
//
// Checkpoint (.danc):
//   "DANC" | u16 version (1) | u8 model kind (0 dan, 1 ablation, 2 classifier)
//   | u8 flags (bit0 attribute sigmoid, bit1 bias) | u32 n_dims | u32 dims[n_dims]
//   | u64 seed | u32 config_len | config bytes (UTF-8 text)
//   | u32 n_blocks | per block: u16 name_len | name | embedded vector file
//   | u32 n_inverted | u8 inverted[n_inverted]

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dan/baselines.hpp"
#include "dan/dataset.hpp"
#include "dan/model.hpp"
#include "dan/numeric.hpp"
#include "dan/params.hpp"

namespace dan {

static_assert(std::numeric_limits<double>::is_iec559 && std::numeric_limits<float>::is_iec559);

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kVectorMagic{'D', 'A', 'N', 'V'};
inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'A', 'N', 'C'};
inline constexpr std::uint16_t kVectorVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::uint16_t kWorldVersion = 1;

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

template <class T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

namespace io {

template <class U>
void put_le(std::ostream& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    out.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& in, std::string_view what) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char buf[sizeof(U)];
    in.read(reinterpret_cast<char*>(buf), sizeof(U));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
        throw FormatError("truncated " + std::string(what) + ": expected " + std::to_string(sizeof(U)) +
                          " bytes, found " + std::to_string(in.gcount()));
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline std::string printable(std::span<const char> bytes) {
    std::string s;
    for (char c : bytes) {
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x20 && u < 0x7F) {
            s += c;
        } else {
            static constexpr char hex[] = "0123456789abcdef";
            s += "\\x";
            s += hex[u >> 4];
            s += hex[u & 0xF];
        }
    }
    return s;
}

inline void expect_magic(std::istream& in, const std::array<char, 4>& magic) {
    std::array<char, 4> found{};
    in.read(found.data(), 4);
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n != 4 || found != magic) {
        throw FormatError("bad magic: expected '" + printable(magic) + "', found '" +
                          printable(std::span<const char>(found.data(), n)) + "'");
    }
}

inline std::string to_chars_exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("cannot parse " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t parse_uint(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("cannot parse " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

/// Writes via a temporary file and renames, so readers never see a partial file.
template <class Writer>
void write_atomic(const std::filesystem::path& path, Writer&& write) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        write(out);
        out.flush();
        if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

inline std::ifstream open_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Vector files

template <class T>
void write_vectors(std::ostream& out, const Matrix<T>& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) throw ShapeError("matrix too large for a vector file");
    out.write(kVectorMagic.data(), 4);
    io::put_le<std::uint16_t>(out, kVectorVersion);
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (T v : m.values()) {
        if constexpr (std::is_same_v<T, float>)
            io::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
        else
            io::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

struct VectorRecord {
    Dtype dtype = Dtype::f64;
    Matrix<double> values;  // f32 payloads are widened exactly
};

inline VectorRecord read_vector_record(std::istream& in) {
    io::expect_magic(in, kVectorMagic);
    const auto version = io::get_le<std::uint16_t>(in, "vector header");
    if (version != kVectorVersion) {
        throw FormatError("unsupported vector file version " + std::to_string(version) + " (expected " +
                          std::to_string(kVectorVersion) + ")");
    }
    const auto tag = io::get_le<std::uint8_t>(in, "vector header");
    if (tag != static_cast<std::uint8_t>(Dtype::f32) && tag != static_cast<std::uint8_t>(Dtype::f64)) {
        throw FormatError("unknown dtype tag " + std::to_string(tag));
    }
    const auto dtype = static_cast<Dtype>(tag);
    const std::uint64_t rows = io::get_le<std::uint32_t>(in, "vector header");
    const std::uint64_t cols = io::get_le<std::uint32_t>(in, "vector header");
    const std::uint64_t bytes = rows * cols * dtype_size(dtype);

    std::vector<unsigned char> payload(static_cast<std::size_t>(bytes));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != bytes) {
        throw FormatError("truncated payload: expected " + std::to_string(bytes) + " bytes for " +
                          std::to_string(rows) + "x" + std::to_string(cols) + ", found " + std::to_string(in.gcount()));
    }
    VectorRecord rec{dtype, Matrix<double>(rows, cols)};
    auto vals = rec.values.values();
    const std::size_t w = dtype_size(dtype);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < w; ++b) bits |= static_cast<std::uint64_t>(payload[i * w + b]) << (8 * b);
        vals[i] = dtype == Dtype::f32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                                      : std::bit_cast<double>(bits);
    }
    return rec;
}

template <class T = double>
Matrix<T> read_vectors(std::istream& in) {
    return read_vector_record(in).values.template cast<T>();
}

template <class T>
void save_vectors(const std::filesystem::path& path, const Matrix<T>& m) {
    io::write_atomic(path, [&](std::ostream& out) { write_vectors(out, m); });
}

template <class T = double>
Matrix<T> load_vectors(const std::filesystem::path& path) {
    auto in = io::open_read(path);
    try {
        return read_vectors<T>(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Worlds

inline std::string bitstring(const AttributeVector& bits) {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) s[i] = '1';
    return s;
}

inline void save_world(const World& world, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "instances");
    const bool synthetic = !world.render_map.empty();
    io::write_atomic(dir / "world.meta", [&](std::ostream& out) {
        out << "format=" << kWorldVersion << "\n"
            << "dim=" << world.dim << "\n"
            << "noise_std=" << io::to_chars_exact(world.noise_std) << "\n"
            << "synthetic=" << (synthetic ? 1 : 0) << "\n";
    });
    io::write_atomic(dir / "attributes.txt", [&](std::ostream& out) {
        for (const auto& n : world.space.names) out << n << "\n";
    });
    io::write_atomic(dir / "concepts.tsv", [&](std::ostream& out) {
        out << "id\tcategory\tsplit\tattributes\n";
        for (std::size_t i = 0; i < world.concepts.size(); ++i) {
            const auto& c = world.concepts[i];
            out << c.id << '\t' << c.category << '\t' << to_string(world.splits.at(i)) << '\t' << bitstring(c.attributes)
                << "\n";
        }
    });
    for (std::size_t i = 0; i < world.concepts.size(); ++i)
        save_vectors(dir / "instances" / (world.concepts[i].id + ".danv"), world.instances.at(i));
    if (synthetic) save_vectors(dir / "render_map.danv", world.render_map);
}

inline std::map<std::string, std::string> read_meta(const std::filesystem::path& path) {
    auto in = io::open_read(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        line = io::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(path.string() + ": malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

/// Parses the concept table; every bitstring must have exactly n_attributes digits.
inline void parse_concept_table(std::istream& in, std::size_t n_attributes, World& world, std::string_view source) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw FormatError(std::string(source) + ": empty concept table");
    ++lineno;
    if (io::strip_cr(line) != "id\tcategory\tsplit\tattributes") {
        throw FormatError(std::string(source) + ": unexpected header '" + line + "'");
    }
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        line = io::strip_cr(line);
        if (line.empty()) continue;
        const auto f = io::split_tabs(line);
        const std::string where = std::string(source) + " line " + std::to_string(lineno);
        if (f.size() != 4) throw FormatError(where + ": expected 4 fields, found " + std::to_string(f.size()));
        const auto split = parse_split(f[2]);
        if (!split) throw FormatError(where + ": unknown split '" + std::string(f[2]) + "'");
        if (f[3].size() != n_attributes) {
            throw FormatError(where + ": bitstring length mismatch: expected " + std::to_string(n_attributes) +
                              ", found " + std::to_string(f[3].size()));
        }
        Concept c{std::string(f[0]), std::string(f[1]), AttributeVector(n_attributes)};
        if (!seen.insert(c.id).second) throw FormatError(where + ": duplicate concept id '" + c.id + "'");
        for (std::size_t a = 0; a < n_attributes; ++a) {
            if (f[3][a] != '0' && f[3][a] != '1') throw FormatError(where + ": bitstring contains '" + std::string(1, f[3][a]) + "'");
            c.attributes[a] = f[3][a] == '1' ? 1 : 0;
        }
        world.concepts.push_back(std::move(c));
        world.splits.push_back(*split);
    }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    auto in = io::open_read(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = io::strip_cr(line);
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline World load_world(const std::filesystem::path& dir) {
    World w;
    const auto meta = read_meta(dir / "world.meta");
    auto get = [&](const std::string& k) {
        auto it = meta.find(k);
        if (it == meta.end()) throw FormatError((dir / "world.meta").string() + ": missing key '" + k + "'");
        return it->second;
    };
    const auto format = io::parse_uint(get("format"), "format");
    if (format != kWorldVersion) throw FormatError("unsupported world format " + std::to_string(format));
    w.dim = static_cast<std::size_t>(io::parse_uint(get("dim"), "dim"));
    w.noise_std = io::parse_double(get("noise_std"), "noise_std");
    const bool synthetic = io::parse_uint(get("synthetic"), "synthetic") != 0;

    w.space.names = read_lines(dir / "attributes.txt");
    {
        auto in = io::open_read(dir / "concepts.tsv");
        parse_concept_table(in, w.space.size(), w, (dir / "concepts.tsv").string());
    }
    for (const auto& c : w.concepts) {
        auto m = load_vectors<double>(dir / "instances" / (c.id + ".danv"));
        if (m.cols() != w.dim) {
            throw FormatError("instances of '" + c.id + "' have dimension " + std::to_string(m.cols()) +
                              ", world declares " + std::to_string(w.dim));
        }
        w.instances.push_back(std::move(m));
    }
    if (synthetic) {
        w.render_map = load_vectors<double>(dir / "render_map.danv");
        if (w.render_map.rows() != w.dim || w.render_map.cols() != w.space.size()) {
            throw FormatError("render map shape " + w.render_map.shape() + " does not match world dims");
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// ViSA-style ingestion

struct VisaLoad {
    World world;
    std::vector<std::string> warnings;
    std::vector<std::string> dropped_attributes;
};

/// attributes_path: TSV with header "concept<TAB>category<TAB><attr>..." and
/// one 0/1 row per concept. vectors_dir: <concept>.danv per concept.
/// Concepts listed in `excluded` or lacking a vector file are skipped;
/// attributes that no remaining concept has are dropped. Splits are assigned
/// by split_concepts with the given seed.
inline VisaLoad load_visa(const std::filesystem::path& attributes_path, const std::filesystem::path& vectors_dir,
                          const std::set<std::string>& excluded = {}, std::uint64_t split_seed = 7) {
    VisaLoad out;
    auto in = io::open_read(attributes_path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(attributes_path.string() + ": empty attribute table");
    line = io::strip_cr(line);
    const auto header = io::split_tabs(line);
    if (header.size() < 3 || header[0] != "concept" || header[1] != "category") {
        throw FormatError(attributes_path.string() + ": header must start with 'concept<TAB>category'");
    }
    std::vector<std::string> names(header.begin() + 2, header.end());

    std::vector<Concept> concepts;
    std::vector<Matrix<double>> instances;
    std::vector<std::string> missing;
    std::size_t lineno = 1;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = io::strip_cr(line);
        if (line.empty()) continue;
        const auto f = io::split_tabs(line);
        const std::string where = attributes_path.string() + " line " + std::to_string(lineno);
        if (f.size() != header.size()) {
            throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(f.size()));
        }
        Concept c{std::string(f[0]), std::string(f[1]), AttributeVector(names.size())};
        for (std::size_t a = 0; a < names.size(); ++a) {
            if (f[a + 2] != "0" && f[a + 2] != "1") throw FormatError(where + ": attribute cell must be 0 or 1");
            c.attributes[a] = f[a + 2] == "1" ? 1 : 0;
        }
        if (excluded.contains(c.id)) continue;
        const auto vpath = vectors_dir / (c.id + ".danv");
        if (!std::filesystem::exists(vpath)) {
            missing.push_back(c.id);
            continue;
        }
        auto m = load_vectors<double>(vpath);
        if (dim == 0) dim = m.cols();
        if (m.cols() != dim) {
            throw FormatError(vpath.string() + ": dimension " + std::to_string(m.cols()) + " differs from " +
                              std::to_string(dim));
        }
        concepts.push_back(std::move(c));
        instances.push_back(std::move(m));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        out.warnings.push_back(std::to_string(missing.size()) + " concept(s) without vectors skipped: " + list);
    }
    if (concepts.empty()) throw FormatError("load_visa: no concepts with vectors");

    std::vector<std::size_t> keep;
    for (std::size_t a = 0; a < names.size(); ++a) {
        bool used = false;
        for (const auto& c : concepts) used = used || c.attributes[a];
        if (used)
            keep.push_back(a);
        else
            out.dropped_attributes.push_back(names[a]);
    }
    World& w = out.world;
    for (auto a : keep) w.space.names.push_back(names[a]);
    for (auto& c : concepts) {
        AttributeVector pruned;
        pruned.reserve(keep.size());
        for (auto a : keep) pruned.push_back(c.attributes[a]);
        c.attributes = std::move(pruned);
    }
    w.concepts = std::move(concepts);
    w.instances = std::move(instances);
    w.dim = dim;
    Rng rng(split_seed);
    auto split = split_concepts(w.concepts, SplitRatios{}, rng);
    w.splits = std::move(split.splits);
    out.warnings.insert(out.warnings.end(), split.warnings.begin(), split.warnings.end());
    return out;
}

inline std::set<std::string> read_exclusions(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    return {lines.begin(), lines.end()};
}

// ---------------------------------------------------------------------------
// Checkpoints

struct NamedMatrix {
    std::string name;
    Dtype dtype = Dtype::f64;
    Matrix<double> value;
};

struct Checkpoint {
    ModelKind kind = ModelKind::dan;
    std::uint8_t flags = 0;
    std::vector<std::uint32_t> dims;
    std::uint64_t seed = 0;
    std::string config;
    std::vector<NamedMatrix> blocks;
    std::vector<std::uint8_t> inverted_units;

    const NamedMatrix& block(std::string_view name) const {
        for (const auto& b : blocks)
            if (b.name == name) return b;
        throw FormatError("checkpoint has no block '" + std::string(name) + "'");
    }
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    out.write(kCheckpointMagic.data(), 4);
    io::put_le<std::uint16_t>(out, kCheckpointVersion);
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(ck.kind));
    io::put_le<std::uint8_t>(out, ck.flags);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.dims.size()));
    for (auto d : ck.dims) io::put_le<std::uint32_t>(out, d);
    io::put_le<std::uint64_t>(out, ck.seed);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.config.size()));
    out.write(ck.config.data(), static_cast<std::streamsize>(ck.config.size()));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.blocks.size()));
    for (const auto& b : ck.blocks) {
        io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
        out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        if (b.dtype == Dtype::f32)
            write_vectors(out, b.value.cast<float>());
        else
            write_vectors(out, b.value);
    }
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.inverted_units.size()));
    out.write(reinterpret_cast<const char*>(ck.inverted_units.data()),
              static_cast<std::streamsize>(ck.inverted_units.size()));
}

inline std::string read_bytes(std::istream& in, std::size_t n, std::string_view what) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError("truncated " + std::string(what) + ": expected " + std::to_string(n) + " bytes, found " +
                          std::to_string(in.gcount()));
    }
    return s;
}

inline Checkpoint read_checkpoint(std::istream& in) {
    io::expect_magic(in, kCheckpointMagic);
    Checkpoint ck;
    const auto version = io::get_le<std::uint16_t>(in, "checkpoint header");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto kind = io::get_le<std::uint8_t>(in, "checkpoint header");
    if (kind > static_cast<std::uint8_t>(ModelKind::classifier)) {
        throw FormatError("unknown model kind tag " + std::to_string(kind));
    }
    ck.kind = static_cast<ModelKind>(kind);
    ck.flags = io::get_le<std::uint8_t>(in, "checkpoint header");
    const auto ndims = io::get_le<std::uint32_t>(in, "checkpoint header");
    if (ndims > 16) throw FormatError("implausible dimension count " + std::to_string(ndims));
    for (std::uint32_t i = 0; i < ndims; ++i) ck.dims.push_back(io::get_le<std::uint32_t>(in, "checkpoint dims"));
    ck.seed = io::get_le<std::uint64_t>(in, "checkpoint header");
    ck.config = read_bytes(in, io::get_le<std::uint32_t>(in, "config length"), "config echo");
    const auto nblocks = io::get_le<std::uint32_t>(in, "block count");
    for (std::uint32_t i = 0; i < nblocks; ++i) {
        NamedMatrix b;
        b.name = read_bytes(in, io::get_le<std::uint16_t>(in, "block name length"), "block name");
        auto rec = read_vector_record(in);
        b.dtype = rec.dtype;
        b.value = std::move(rec.values);
        ck.blocks.push_back(std::move(b));
    }
    const auto ninv = io::get_le<std::uint32_t>(in, "orientation length");
    const auto inv = read_bytes(in, ninv, "orientation");
    ck.inverted_units.assign(inv.begin(), inv.end());
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    io::write_atomic(path, [&](std::ostream& out) { write_checkpoint(out, ck); });
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto in = io::open_read(path);
    try {
        return read_checkpoint(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

namespace detail {

template <class P>
void fill_blocks(Checkpoint& ck, const P& p) {
    using T = typename std::remove_cvref_t<decltype(*p.blocks()[0].value)>::value_type;
    for (const auto& b : p.blocks()) ck.blocks.push_back({std::string(b.name), dtype_of<T>(), b.value->template cast<double>()});
}

template <class P>
void take_blocks(const Checkpoint& ck, P& p) {
    for (auto& b : p.blocks()) {
        const auto& src = ck.block(b.name);
        if (src.value.rows() != b.value->rows() || src.value.cols() != b.value->cols()) {
            throw FormatError("block '" + std::string(b.name) + "' has shape " + src.value.shape() + ", expected " +
                              b.value->shape());
        }
        using T = typename std::remove_cvref_t<decltype(*b.value)>::value_type;
        *b.value = src.value.template cast<T>();
    }
}

inline void expect_kind(const Checkpoint& ck, ModelKind kind, std::size_t ndims) {
    if (ck.kind != kind) {
        throw FormatError("checkpoint holds a '" + std::string(to_string(ck.kind)) + "' model, expected '" +
                          std::string(to_string(kind)) + "'");
    }
    if (ck.dims.size() != ndims) throw FormatError("checkpoint has " + std::to_string(ck.dims.size()) + " dims");
}

}  // namespace detail

template <class T>
Checkpoint to_checkpoint(const DanParams<T>& p, std::uint64_t seed = 0, std::string config = {}) {
    Checkpoint ck;
    ck.kind = ModelKind::dan;
    ck.flags = static_cast<std::uint8_t>((p.options.attr_sigmoid ? 1 : 0) | (p.options.bias ? 2 : 0));
    ck.dims = {static_cast<std::uint32_t>(p.dims.input_dim), static_cast<std::uint32_t>(p.dims.n_attributes),
               static_cast<std::uint32_t>(p.dims.hidden)};
    ck.seed = seed;
    ck.config = std::move(config);
    detail::fill_blocks(ck, p);
    ck.inverted_units = p.inverted_units;
    return ck;
}

template <class T = double>
DanParams<T> dan_from_checkpoint(const Checkpoint& ck) {
    detail::expect_kind(ck, ModelKind::dan, 3);
    DanOptions opt{(ck.flags & 1) != 0, (ck.flags & 2) != 0};
    auto p = DanParams<T>::zeros({ck.dims[0], ck.dims[1], ck.dims[2]}, opt);
    detail::take_blocks(ck, p);
    if (!ck.inverted_units.empty() && ck.inverted_units.size() != ck.dims[1]) {
        throw FormatError("orientation has " + std::to_string(ck.inverted_units.size()) + " entries, expected " +
                          std::to_string(ck.dims[1]));
    }
    p.inverted_units = ck.inverted_units;
    return p;
}

template <class P>
Checkpoint mlp_to_checkpoint(const P& p, ModelKind kind, std::uint64_t seed, std::string config) {
    Checkpoint ck;
    ck.kind = kind;
    ck.dims = {static_cast<std::uint32_t>(p.dims.input_dim), static_cast<std::uint32_t>(p.dims.hidden),
               static_cast<std::uint32_t>(p.dims.output_dim)};
    ck.seed = seed;
    ck.config = std::move(config);
    detail::fill_blocks(ck, p);
    return ck;
}

template <class T>
Checkpoint to_checkpoint(const AblationParams<T>& p, std::uint64_t seed = 0, std::string config = {}) {
    return mlp_to_checkpoint(p, ModelKind::ablation, seed, std::move(config));
}

template <class T>
Checkpoint to_checkpoint(const ClassifierParams<T>& p, std::uint64_t seed = 0, std::string config = {}) {
    return mlp_to_checkpoint(p, ModelKind::classifier, seed, std::move(config));
}

template <class P>
P mlp_from_checkpoint(const Checkpoint& ck, ModelKind kind) {
    detail::expect_kind(ck, kind, 3);
    P p(P::zeros({ck.dims[0], ck.dims[1], ck.dims[2]}));
    detail::take_blocks(ck, p);
    return p;
}

template <class T = double>
AblationParams<T> ablation_from_checkpoint(const Checkpoint& ck) {
    return mlp_from_checkpoint<AblationParams<T>>(ck, ModelKind::ablation);
}

template <class T = double>
ClassifierParams<T> classifier_from_checkpoint(const Checkpoint& ck) {
    return mlp_from_checkpoint<ClassifierParams<T>>(ck, ModelKind::classifier);
}

}  // namespace dan
