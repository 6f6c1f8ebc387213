#include "gse/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gse/snapshot.hpp"

namespace gse {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::size_t parse_count(const std::string& v) {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad count '" + v + "'");
    return static_cast<std::size_t>(out);
}

std::vector<AdapterKind> parse_kinds(const std::string& v) {
    std::vector<AdapterKind> kinds;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) kinds.push_back(adapter_kind_from_string(item));
    }
    if (kinds.empty()) throw std::invalid_argument("empty kind list");
    return kinds;
}

void set_key(HarnessConfig& c, const std::string& key, const std::string& value) {
    if (key == "task.m")
        c.task.m = parse_count(value);
    else if (key == "task.n")
        c.task.n = parse_count(value);
    else if (key == "task.num_clusters")
        c.task.num_clusters = parse_count(value);
    else if (key == "task.cluster_rank")
        c.task.cluster_rank = parse_count(value);
    else if (key == "task.noise_std")
        c.task.noise_std = parse_double(value);
    else if (key == "task.samples_train")
        c.task.samples_train = parse_count(value);
    else if (key == "task.samples_val")
        c.task.samples_val = parse_count(value);
    else if (key == "task.seed")
        c.task.seed = std::stoull(value);
    else if (key == "gse.variant")
        c.gse.variant = variant_from_string(value);
    else if (key == "gse.r_g")
        c.gse.r_g = parse_count(value);
    else if (key == "gse.d")
        c.gse.d = parse_count(value);
    else if (key == "gse.num_experts")
        c.gse.num_experts = parse_count(value);
    else if (key == "gse.top_k")
        c.gse.top_k = parse_count(value);
    else if (key == "gse.s_g")
        c.gse.s_g = parse_double(value);
    else if (key == "gse.s_base")
        c.gse.s_base = parse_double(value);
    else if (key == "gse.alpha")
        c.gse.alpha = parse_double(value);
    else if (key == "gse.router_std")
        c.gse.router_std = parse_double(value);
    else if (key == "gse.seed")
        c.gse.seed = std::stoull(value);
    else if (key == "train.steps")
        c.train.steps = parse_count(value);
    else if (key == "train.batch_size")
        c.train.batch_size = parse_count(value);
    else if (key == "train.optim") {
        if (value == "sgd")
            c.train.optim.kind = OptimKind::sgd;
        else if (value == "adam")
            c.train.optim.kind = OptimKind::adam;
        else
            throw std::invalid_argument("unknown optimizer '" + value + "'");
    } else if (key == "train.lr")
        c.train.lr = parse_double(value);
    else if (key == "train.lr_final")
        c.train.lr_final = parse_double(value);
    else if (key == "train.lora_scale")
        c.train.lora_scale = parse_double(value);
    else if (key == "train.seed")
        c.train.seed = std::stoull(value);
    else if (key == "compare.trials")
        c.trials = parse_count(value);
    else if (key == "compare.kinds")
        c.kinds = parse_kinds(value);
    else if (key == "compare.max_threads")
        c.max_threads = parse_count(value);
    else if (key == "run.label")
        c.label = value;
    else
        throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

void HarnessConfig::validate() const {
    task.validate();
    gse.validate();
    if (train.batch_size == 0) throw std::invalid_argument("train.batch_size must be >= 1");
    if (trials == 0) throw std::invalid_argument("compare.trials must be >= 1");
    if (label.empty()) throw std::invalid_argument("run.label must be non-empty");
}

HarnessConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path.string());
    HarnessConfig config;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            set_key(config, section.empty() ? key : section + "." + key, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
    return config;
}

void apply_override(HarnessConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override '" + assignment + "' is not key=value");
    set_key(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string echo_config(const HarnessConfig& c) {
    std::ostringstream out;
    out << "task.m=" << c.task.m << '\n';
    out << "task.n=" << c.task.n << '\n';
    out << "task.num_clusters=" << c.task.num_clusters << '\n';
    out << "task.cluster_rank=" << c.task.cluster_rank << '\n';
    out << "task.noise_std=" << fmt17(c.task.noise_std) << '\n';
    out << "task.samples_train=" << c.task.samples_train << '\n';
    out << "task.samples_val=" << c.task.samples_val << '\n';
    out << "task.seed=" << c.task.seed << '\n';
    out << "gse.variant=" << to_string(c.gse.variant) << '\n';
    out << "gse.r_g=" << c.gse.r_g << '\n';
    out << "gse.d=" << c.gse.d << '\n';
    out << "gse.num_experts=" << c.gse.num_experts << '\n';
    out << "gse.top_k=" << c.gse.top_k << '\n';
    out << "gse.s_g=" << fmt17(c.gse.s_g) << '\n';
    out << "gse.s_base=" << fmt17(c.gse.s_base) << '\n';
    out << "gse.alpha=" << fmt17(c.gse.alpha) << '\n';
    out << "gse.router_std=" << fmt17(c.gse.router_std) << '\n';
    out << "gse.seed=" << c.gse.seed << '\n';
    out << "train.steps=" << c.train.steps << '\n';
    out << "train.batch_size=" << c.train.batch_size << '\n';
    out << "train.optim=" << (c.train.optim.kind == OptimKind::sgd ? "sgd" : "adam") << '\n';
    out << "train.lr=" << fmt17(c.train.lr) << '\n';
    out << "train.lr_final=" << fmt17(c.train.lr_final) << '\n';
    out << "train.lora_scale=" << fmt17(c.train.lora_scale) << '\n';
    out << "train.seed=" << c.train.seed << '\n';
    out << "compare.trials=" << c.trials << '\n';
    out << "compare.kinds=";
    for (std::size_t i = 0; i < c.kinds.size(); ++i)
        out << (i ? "," : "") << to_string(c.kinds[i]);
    out << '\n';
    out << "compare.max_threads=" << c.max_threads << '\n';
    out << "run.label=" << c.label << '\n';
    return out.str();
}

}  // namespace gse
