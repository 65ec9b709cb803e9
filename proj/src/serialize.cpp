#include "cta/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cta {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void append_vec(std::string& out, const Vec& v) {
    for (double x : v) {
        out += ' ';
        out += format_double(x);
    }
    out += '\n';
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

class LineReader {
public:
    LineReader(const std::string& text, std::string context)
        : in_(text), context_(std::move(context)) {}

    std::istringstream expect(const std::string& tag) {
        std::string line;
        if (!std::getline(in_, line))
            throw std::runtime_error(context_ + ": unexpected end of file, wanted '" + tag + "'");
        std::istringstream ls(line);
        std::string head;
        for (std::istringstream tags(tag); tags >> head;) {
            std::string got;
            if (!(ls >> got) || got != head)
                throw std::runtime_error(context_ + ": expected '" + tag + "', got '" + line + "'");
        }
        return ls;
    }

    Vec read_vec(const std::string& tag, std::size_t n) {
        std::istringstream ls = expect(tag);
        Vec v(n);
        for (std::size_t i = 0; i < n; ++i)
            if (!(ls >> v[i]))
                throw std::runtime_error(context_ + ": short '" + tag + "' line, expected " +
                                         std::to_string(n) + " values");
        return v;
    }

private:
    std::istringstream in_;
    std::string context_;
};

void append_stats_block(std::string& out, const std::string& tag, const GaussianStats& s) {
    out += tag + " mean";
    append_vec(out, s.mean);
    out += tag + " var";
    append_vec(out, s.var);
    out += tag + " count " + std::to_string(s.count) + "\n";
}

GaussianStats read_stats_block(LineReader& r, const std::string& tag, std::size_t d) {
    GaussianStats s;
    s.mean = r.read_vec(tag + " mean", d);
    s.var = r.read_vec(tag + " var", d);
    auto ls = r.expect(tag + " count");
    if (!(ls >> s.count)) throw std::runtime_error("bad count line for " + tag);
    return s;
}

}  // namespace

std::string reference_stats_to_string(const ReferenceStats& refs) {
    std::string out = "ctastats v1 d=" + std::to_string(refs.dim()) +
                      " k=" + std::to_string(refs.classes()) + "\n";
    append_stats_block(out, "image", refs.image);
    for (std::size_t k = 0; k < refs.classes(); ++k)
        append_stats_block(out, "class " + std::to_string(k), refs.per_class[k]);
    out += "dklin " + format_double(refs.d_kl_in) + "\n";
    return out;
}

ReferenceStats reference_stats_from_string(const std::string& text, const std::string& context) {
    LineReader r(text, context);
    auto header = r.expect("ctastats v1");
    std::string dtok, ktok;
    if (!(header >> dtok >> ktok) || dtok.rfind("d=", 0) != 0 || ktok.rfind("k=", 0) != 0)
        throw std::runtime_error(context + ": malformed ctastats header");
    const std::size_t d = std::stoul(dtok.substr(2));
    const std::size_t classes = std::stoul(ktok.substr(2));

    ReferenceStats refs;
    refs.image = read_stats_block(r, "image", d);
    refs.per_class.reserve(classes);
    for (std::size_t k = 0; k < classes; ++k)
        refs.per_class.push_back(read_stats_block(r, "class " + std::to_string(k), d));
    auto ls = r.expect("dklin");
    if (!(ls >> refs.d_kl_in)) throw std::runtime_error(context + ": missing dklin value");
    return refs;
}

void write_reference_stats(const std::string& path, const ReferenceStats& refs) {
    spit(path, reference_stats_to_string(refs));
}

ReferenceStats read_reference_stats(const std::string& path) {
    return reference_stats_from_string(slurp(path), path);
}

void write_weights(const std::string& path, const FrozenBackbone& backbone,
                   const LowRankAdaptor& adaptor) {
    std::string out = "ctaweights v1 d=" + std::to_string(backbone.dim()) +
                      " r=" + std::to_string(adaptor.r) + "\n";
    out += "backbone w";
    append_vec(out, backbone.w.data);
    out += "backbone b";
    append_vec(out, backbone.b);
    out += "adaptor down";
    append_vec(out, adaptor.w_down.data);
    out += "adaptor up";
    append_vec(out, adaptor.w_up.data);
    spit(path, out);
}

void read_weights(const std::string& path, FrozenBackbone& backbone, LowRankAdaptor& adaptor) {
    LineReader r(slurp(path), path);
    auto header = r.expect("ctaweights v1");
    std::string dtok, rtok;
    if (!(header >> dtok >> rtok) || dtok.rfind("d=", 0) != 0 || rtok.rfind("r=", 0) != 0)
        throw std::runtime_error(path + ": malformed ctaweights header");
    const std::size_t d = std::stoul(dtok.substr(2));
    const std::size_t rr = std::stoul(rtok.substr(2));
    if (d == 0 || rr == 0 || d % rr != 0)
        throw std::runtime_error(path + ": invalid dimensions in header");
    const std::size_t k = d / rr;

    backbone.w = Mat(d, d);
    backbone.w.data = r.read_vec("backbone w", d * d);
    backbone.b = r.read_vec("backbone b", d);
    adaptor.r = rr;
    adaptor.w_down = Mat(d, k);
    adaptor.w_down.data = r.read_vec("adaptor down", d * k);
    adaptor.w_up = Mat(k, d);
    adaptor.w_up.data = r.read_vec("adaptor up", k * d);
}

}  // namespace cta
