#include "cta/config.hpp"

#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cta {

std::string method_name(Method m, std::size_t evenly_n) {
    switch (m) {
        case Method::kDirect: return "direct";
        case Method::kFull: return "full";
        case Method::kOurs: return "ours";
        case Method::kOursSkip: return "ours-skip";
        case Method::kEvenlySkip: return "evenly-skip-" + std::to_string(evenly_n);
    }
    return "?";
}

void parse_method(const std::string& name, Method& method, std::size_t& evenly_n) {
    evenly_n = 1;
    if (name == "direct")
        method = Method::kDirect;
    else if (name == "full")
        method = Method::kFull;
    else if (name == "ours")
        method = Method::kOurs;
    else if (name == "ours-skip")
        method = Method::kOursSkip;
    else if (name.rfind("evenly-skip-", 0) == 0) {
        method = Method::kEvenlySkip;
        const std::string n = name.substr(12);
        std::size_t pos = 0;
        evenly_n = std::stoul(n, &pos);
        if (pos != n.size() || evenly_n == 0)
            throw std::invalid_argument("bad evenly-skip period in method '" + name + "'");
    } else
        throw std::invalid_argument("unknown method '" + name + "'");
}

namespace {

struct Node {
    std::string value;
    std::vector<std::pair<std::string, Node>> children;
    bool is_block = false;
};

struct Tokenizer {
    explicit Tokenizer(const std::string& text) : text_(text) {}

    // returns empty string at end of input
    std::string next() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
        if (pos_ >= text_.size()) return "";
        if (text_[pos_] == '{' || text_[pos_] == '}') return std::string(1, text_[pos_++]);
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
               text_[pos_] != '{' && text_[pos_] != '}' && text_[pos_] != '#')
            ++pos_;
        return text_.substr(start, pos_ - start);
    }

    const std::string& text_;
    std::size_t pos_ = 0;
};

Node parse_block(Tokenizer& tok, bool top_level) {
    Node node;
    node.is_block = true;
    for (;;) {
        std::string key = tok.next();
        if (key.empty()) {
            if (!top_level) throw std::invalid_argument("config: unterminated block");
            return node;
        }
        if (key == "}") {
            if (top_level) throw std::invalid_argument("config: stray '}'");
            return node;
        }
        if (key == "{") throw std::invalid_argument("config: block without a key");
        std::string val = tok.next();
        if (val == "{") {
            node.children.emplace_back(key, parse_block(tok, false));
        } else if (val.empty() || val == "}") {
            throw std::invalid_argument("config: key '" + key + "' has no value");
        } else {
            Node leaf;
            leaf.value = val;
            node.children.emplace_back(key, std::move(leaf));
        }
    }
}

class Block {
public:
    Block(const Node& node, std::string path) : node_(node), path_(std::move(path)) {}

    bool has(const std::string& key) const {
        for (const auto& [k, child] : node_.children)
            if (k == key) return true;
        return false;
    }

    const Node* find(const std::string& key) {
        const Node* found = nullptr;
        for (const auto& [k, child] : node_.children)
            if (k == key) {
                if (found) throw std::invalid_argument("config: duplicate key " + dotted(key));
                found = &child;
            }
        consumed_.insert(key);
        return found;
    }

    std::string leaf(const std::string& key, const std::string& fallback) {
        const Node* n = find(key);
        if (!n) return fallback;
        if (n->is_block) throw std::invalid_argument("config: " + dotted(key) + " must be a value");
        return n->value;
    }

    double number(const std::string& key, double fallback) {
        const std::string s = leaf(key, "");
        if (s.empty()) return fallback;
        if (s == "inf") return std::numeric_limits<double>::infinity();
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size())
            throw std::invalid_argument("config: " + dotted(key) + " is not a number: '" + s + "'");
        return v;
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        const double v = number(key, static_cast<double>(fallback));
        if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v)))
            throw std::invalid_argument("config: " + dotted(key) + " must be a whole number");
        return static_cast<std::size_t>(v);
    }

    Block block(const std::string& key) {
        const Node* n = find(key);
        if (!n) return Block(empty_node(), dotted(key));
        if (!n->is_block)
            throw std::invalid_argument("config: " + dotted(key) + " must be a block");
        return Block(*n, dotted(key));
    }

    std::vector<Block> blocks(const std::string& key) {
        consumed_.insert(key);
        std::vector<Block> out;
        for (const auto& [k, child] : node_.children)
            if (k == key) {
                if (!child.is_block)
                    throw std::invalid_argument("config: " + dotted(key) + " must be a block");
                out.emplace_back(child, dotted(key));
            }
        return out;
    }

    void reject_unknown() const {
        for (const auto& [k, child] : node_.children)
            if (!consumed_.count(k))
                throw std::invalid_argument("config: unknown key " + dotted(k));
    }

private:
    static const Node& empty_node() {
        static const Node n{std::string(), {}, true};
        return n;
    }
    std::string dotted(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    const Node& node_;
    std::string path_;
    std::set<std::string> consumed_;
};

SegmentSpec parse_segment(Block& b) {
    SegmentSpec s;
    s.duration = b.count("duration", 0);
    if (s.duration == 0) throw std::invalid_argument("config: segment needs a positive duration");
    s.shift_norm = b.number("shift", 0.0);
    s.shift_classes = b.count("shift_classes", 0);
    s.scale = b.number("scale", 1.0);
    s.noise_std = b.number("noise", 0.0);
    s.rot_angle = b.number("rot_angle", 0.0);
    s.rot_planes = b.count("rot_planes", 0);
    b.reject_unknown();
    return s;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (d < 2 || classes < 2) throw std::invalid_argument("config: need d >= 2 and classes >= 2");
    if (r == 0 || d % r != 0) throw std::invalid_argument("config: r must divide d");
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
    if (ref_samples < 4) throw std::invalid_argument("config: ref_samples must be >= 4");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("config: alpha must be in (0,1]");
    if (!(bg_threshold > 0.0 && bg_threshold < 1.0))
        throw std::invalid_argument("config: bg threshold must lie in (0,1)");
    if (tau1 < 0.0 || tau2 < 0.0 || std::isnan(tau1) || std::isnan(tau2))
        throw std::invalid_argument("config: thresholds must be nonnegative");
    if (n_obj_min < 1 || n_obj_max > 32 || n_obj_min > n_obj_max)
        throw std::invalid_argument("config: object count range must lie within [1,32]");
    if (scenario == "custom" && segments.empty())
        throw std::invalid_argument("config: custom scenario needs an inline schedule");
}

ExperimentConfig parse_config(const std::string& text) {
    Tokenizer tok(text);
    Node root = parse_block(tok, true);
    Block top(root, "");

    ExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(top.count("seed", cfg.seed));
    parse_method(top.leaf("method", "ours"), cfg.method, cfg.evenly_n);
    cfg.batch_size = top.count("batch_size", cfg.batch_size);
    cfg.ref_samples = top.count("ref_samples", cfg.ref_samples);
    cfg.out_dir = top.leaf("out_dir", cfg.out_dir);
    cfg.refs_path = top.leaf("refs_path", cfg.refs_path);

    Block model = top.block("model");
    cfg.d = model.count("d", cfg.d);
    cfg.classes = model.count("classes", cfg.classes);
    cfg.r = model.count("r", cfg.r);
    model.reject_unknown();

    Block rates = top.block("rates");
    cfg.lr = rates.number("lr", cfg.lr);
    cfg.alpha = rates.number("alpha", cfg.alpha);
    rates.reject_unknown();

    Block thresholds = top.block("thresholds");
    cfg.tau1 = thresholds.number("tau1", cfg.tau1);
    cfg.tau2 = thresholds.number("tau2", cfg.tau2);
    cfg.bg_threshold = thresholds.number("bg", cfg.bg_threshold);
    thresholds.reject_unknown();

    Block sim = top.block("sim");
    cfg.feature_scale = sim.number("feature_scale", cfg.feature_scale);
    cfg.separation = sim.number("separation", cfg.separation);
    cfg.class_var = sim.number("class_var", cfg.class_var);
    cfg.imbalance = sim.number("imbalance", cfg.imbalance);
    cfg.n_obj_min = sim.count("n_obj_min", cfg.n_obj_min);
    cfg.n_obj_max = sim.count("n_obj_max", cfg.n_obj_max);
    sim.reject_unknown();

    cfg.scenario = top.leaf("scenario", cfg.scenario);

    if (top.has("schedule")) {
        Block sched = top.block("schedule");
        const std::string mode = sched.leaf("mode", "discrete");
        if (mode == "discrete")
            cfg.schedule_mode = ScheduleMode::kDiscrete;
        else if (mode == "continuous")
            cfg.schedule_mode = ScheduleMode::kContinuous;
        else
            throw std::invalid_argument("config: schedule.mode must be discrete or continuous");
        for (Block& seg : sched.blocks("segment")) cfg.segments.push_back(parse_segment(seg));
        sched.reject_unknown();
    }

    top.reject_unknown();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace cta
