#include "gse/snapshot.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gse {

namespace {

constexpr const char* kMatrixTag = "gse-matrix";
constexpr const char* kLayerTag = "gse-layer";
constexpr const char* kAdapterTag = "gse-adapter";
constexpr int kSchemaVersion = 1;

[[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("snapshot: " + what);
}

std::string next_token(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) fail("unexpected end of input");
    return tok;
}

void expect_token(std::istream& in, const std::string& want) {
    const std::string got = next_token(in);
    if (got != want) fail("expected '" + want + "', got '" + got + "'");
}

std::size_t next_count(std::istream& in) {
    const std::string tok = next_token(in);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
        fail("bad count '" + tok + "'");
    }
    if (pos != tok.size()) fail("bad count '" + tok + "'");
    return static_cast<std::size_t>(v);
}

double next_double(std::istream& in) { return parse_double(next_token(in)); }

void check_version(std::istream& in, const char* tag) {
    expect_token(in, tag);
    const std::size_t version = next_count(in);
    if (version != static_cast<std::size_t>(kSchemaVersion))
        fail(std::string(tag) + ": unsupported schema version " + std::to_string(version));
}

void write_matrix_body(std::ostream& out, const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << fmt17(m(i, j));
        }
        out << '\n';
    }
}

Matrix read_matrix_body(std::istream& in, const std::string& name) {
    expect_token(in, name);
    const std::size_t rows = next_count(in);
    const std::size_t cols = next_count(in);
    Matrix m(rows, cols);
    for (std::size_t f = 0; f < m.size(); ++f) m.data()[f] = next_double(in);
    return m;
}

void write_segment(std::ostream& out, const std::string& name, const SpectralSegment& seg) {
    out << name << ' ' << seg.index_lo << ' ' << seg.index_hi << '\n';
    write_matrix_body(out, "u", seg.u);
    out << "sigma " << seg.sigma.size() << '\n';
    for (std::size_t i = 0; i < seg.sigma.size(); ++i) {
        if (i) out << ' ';
        out << fmt17(seg.sigma[i]);
    }
    out << '\n';
    write_matrix_body(out, "v", seg.v);
}

SpectralSegment read_segment(std::istream& in, const std::string& name) {
    SpectralSegment seg;
    expect_token(in, name);
    seg.index_lo = next_count(in);
    seg.index_hi = next_count(in);
    seg.u = read_matrix_body(in, "u");
    expect_token(in, "sigma");
    seg.sigma.resize(next_count(in));
    for (double& s : seg.sigma) s = next_double(in);
    seg.v = read_matrix_body(in, "v");
    return seg;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot read " + path.string());
    return in;
}

}  // namespace

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& token) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + token.size()) fail("bad decimal '" + token + "'");
    return v;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    auto out = open_out(path);
    out << kMatrixTag << ' ' << kSchemaVersion << '\n';
    write_matrix_body(out, "dims", m);
    if (!out) fail("write failed for " + path.string());
}

Matrix load_matrix(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_version(in, kMatrixTag);
    return read_matrix_body(in, "dims");
}

void write_layer(std::ostream& out, const GseLayer& layer) {
    out << kLayerTag << ' ' << kSchemaVersion << '\n';
    const GseConfig& c = layer.config;
    out << "variant " << to_string(c.variant) << '\n';
    out << "r_g " << c.r_g << '\n';
    out << "d " << c.d << '\n';
    out << "num_experts " << c.num_experts << '\n';
    out << "top_k " << c.top_k << '\n';
    out << "s_g " << fmt17(c.s_g) << '\n';
    out << "s_base " << fmt17(c.s_base) << '\n';
    out << "alpha " << fmt17(c.alpha) << '\n';
    out << "router_std " << fmt17(c.router_std) << '\n';
    out << "seed " << c.seed << '\n';
    write_matrix_body(out, "w0_original", layer.w0_original);
    write_matrix_body(out, "w0_adjusted", layer.w0_adjusted);
    out << "generalized " << fmt17(layer.generalized.scale) << '\n';
    write_matrix_body(out, "b", layer.generalized.b);
    write_matrix_body(out, "a", layer.generalized.a);
    write_segment(out, "generalized_segment", layer.generalized_segment);
    out << "specialized " << layer.specialized.size() << '\n';
    for (const auto& e : layer.specialized) {
        out << "expert " << fmt17(e.scale) << ' ' << fmt17(e.trace_sigma) << '\n';
        write_matrix_body(out, "b", e.b);
        write_matrix_body(out, "a", e.a);
    }
    out << "segments " << layer.segments.size() << '\n';
    for (const auto& seg : layer.segments) write_segment(out, "segment", seg);
    write_matrix_body(out, "router", layer.router.w_z);
}

GseLayer read_layer(std::istream& in) {
    check_version(in, kLayerTag);
    GseLayer layer;
    GseConfig& c = layer.config;
    expect_token(in, "variant");
    c.variant = variant_from_string(next_token(in));
    expect_token(in, "r_g");
    c.r_g = next_count(in);
    expect_token(in, "d");
    c.d = next_count(in);
    expect_token(in, "num_experts");
    c.num_experts = next_count(in);
    expect_token(in, "top_k");
    c.top_k = next_count(in);
    expect_token(in, "s_g");
    c.s_g = next_double(in);
    expect_token(in, "s_base");
    c.s_base = next_double(in);
    expect_token(in, "alpha");
    c.alpha = next_double(in);
    expect_token(in, "router_std");
    c.router_std = next_double(in);
    expect_token(in, "seed");
    c.seed = static_cast<std::uint64_t>(std::stoull(next_token(in)));
    layer.w0_original = read_matrix_body(in, "w0_original");
    layer.w0_adjusted = read_matrix_body(in, "w0_adjusted");
    expect_token(in, "generalized");
    layer.generalized.scale = next_double(in);
    layer.generalized.b = read_matrix_body(in, "b");
    layer.generalized.a = read_matrix_body(in, "a");
    layer.generalized_segment = read_segment(in, "generalized_segment");
    expect_token(in, "specialized");
    layer.specialized.resize(next_count(in));
    for (auto& e : layer.specialized) {
        expect_token(in, "expert");
        e.scale = next_double(in);
        e.trace_sigma = next_double(in);
        e.b = read_matrix_body(in, "b");
        e.a = read_matrix_body(in, "a");
    }
    expect_token(in, "segments");
    layer.segments.resize(next_count(in));
    for (auto& seg : layer.segments) seg = read_segment(in, "segment");
    layer.router.w_z = read_matrix_body(in, "router");
    return layer;
}

void save_layer(const std::filesystem::path& path, const GseLayer& layer) {
    auto out = open_out(path);
    write_layer(out, layer);
    if (!out) fail("write failed for " + path.string());
}

GseLayer load_layer(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_layer(in);
}

void save_adapter(const std::filesystem::path& path, const Adapter& adapter) {
    auto out = open_out(path);
    out << kAdapterTag << ' ' << kSchemaVersion << '\n';
    out << "kind " << to_string(adapter.kind()) << '\n';
    switch (adapter.kind()) {
        case AdapterKind::gse:
            write_layer(out, dynamic_cast<const GseAdapter&>(adapter).layer());
            break;
        case AdapterKind::lora: {
            const auto& lora = dynamic_cast<const LoraAdapter&>(adapter);
            out << "scale " << fmt17(lora.scale()) << '\n';
            write_matrix_body(out, "w0", lora.backbone());
            write_matrix_body(out, "b", lora.factor_b());
            write_matrix_body(out, "a", lora.factor_a());
            break;
        }
        case AdapterKind::pissa_style: {
            const auto& p = dynamic_cast<const PissaStyleAdapter&>(adapter);
            write_matrix_body(out, "residual", p.residual());
            write_matrix_body(out, "b", p.factor_b());
            write_matrix_body(out, "a", p.factor_a());
            break;
        }
        case AdapterKind::full_ft:
            write_matrix_body(out, "w", dynamic_cast<const FullFtAdapter&>(adapter).weight());
            break;
    }
    if (!out) fail("write failed for " + path.string());
}

std::unique_ptr<Adapter> load_adapter(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_version(in, kAdapterTag);
    expect_token(in, "kind");
    const AdapterKind kind = adapter_kind_from_string(next_token(in));
    switch (kind) {
        case AdapterKind::gse:
            return std::make_unique<GseAdapter>(read_layer(in));
        case AdapterKind::lora: {
            expect_token(in, "scale");
            const double scale = next_double(in);
            Matrix w0 = read_matrix_body(in, "w0");
            Matrix b = read_matrix_body(in, "b");
            Matrix a = read_matrix_body(in, "a");
            return std::make_unique<LoraAdapter>(std::move(w0), std::move(b), std::move(a),
                                                 scale);
        }
        case AdapterKind::pissa_style: {
            Matrix residual = read_matrix_body(in, "residual");
            Matrix b = read_matrix_body(in, "b");
            Matrix a = read_matrix_body(in, "a");
            return std::make_unique<PissaStyleAdapter>(std::move(residual), std::move(b),
                                                       std::move(a));
        }
        case AdapterKind::full_ft:
            return std::make_unique<FullFtAdapter>(read_matrix_body(in, "w"));
    }
    fail("unknown adapter kind in " + path.string());
}

}  // namespace gse
