#include "ilms/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ilms::config {

using nlohmann::json;

namespace {

// Sub-keys of the configuration stream; one independent draw per (node, field).
enum class Field : std::uint64_t { Mu = 1, SigmaV2, Trace, Spread, SigmaC2, Alpha, SigmaU2, Mean, H };

class Reader {
public:
    explicit Reader(std::uint64_t seed) : seed_(seed) {}

    // A number, or {"uniform": [lo, hi]} drawn for `node`.
    double number(const json& v, const std::string& path, int node, Field field) const {
        if (v.is_number()) return finite(v.get<double>(), path);
        if (v.is_object() && v.contains("uniform")) {
            const auto& u = v.at("uniform");
            if (!u.is_array() || u.size() != 2 || !u[0].is_number() || !u[1].is_number())
                throw ConfigError("uniform needs [lo, hi]", path + ".uniform");
            const double lo = u[0].get<double>();
            const double hi = u[1].get<double>();
            if (!(lo <= hi)) throw ConfigError("lo exceeds hi", path + ".uniform");
            CounterRng rng(seed_, 0, static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(field),
                           Stream::Config);
            return lo + (hi - lo) * rng.uniform();
        }
        throw ConfigError("expected a number or {\"uniform\": [lo, hi]}", path);
    }

    double number_or(const json& obj, const char* key, double fallback, const std::string& path, int node,
                     Field field) const {
        if (!obj.contains(key)) return fallback;
        return number(obj.at(key), path + "." + key, node, field);
    }

    static double finite(double x, const std::string& path) {
        if (!std::isfinite(x)) throw ConfigError("must be finite", path);
        return x;
    }

private:
    std::uint64_t seed_;
};

const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw ConfigError("expected an object", path);
    if (!obj.contains(key)) throw ConfigError("missing required field", path + "." + key);
    return obj.at(key);
}

int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError("expected an integer", path);
    return v.get<int>();
}

Matrix matrix(const json& v, int m, const std::string& path) {
    if (!v.is_array() || static_cast<int>(v.size()) != m) throw ConfigError("expected " + std::to_string(m) + " rows", path);
    Matrix a(m, m);
    for (int i = 0; i < m; ++i) {
        const auto& row = v[i];
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!row.is_array() || static_cast<int>(row.size()) != m)
            throw ConfigError("expected " + std::to_string(m) + " columns", rp);
        for (int j = 0; j < m; ++j) {
            if (!row[j].is_number()) throw ConfigError("expected a number", rp + "[" + std::to_string(j) + "]");
            a(i, j) = Reader::finite(row[j].get<double>(), rp);
        }
    }
    return a;
}

json matrix_json(const Matrix& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Entry k of an array of N, or the template object itself.
const json& entry(const json& list, int k, int n, const std::string& path, std::string& entry_path) {
    if (list.is_array()) {
        if (static_cast<int>(list.size()) != n)
            throw ConfigError("expected " + std::to_string(n) + " entries, got " + std::to_string(list.size()), path);
        entry_path = path + "[" + std::to_string(k) + "]";
        return list[k];
    }
    if (list.is_object()) {
        entry_path = path;
        return list;
    }
    throw ConfigError("expected an array or a template object", path);
}

model::NodeProfile parse_profile(const json& p, int k, int m, const Reader& rd, const std::string& path,
                                 const Matrix& shared_basis, std::uint64_t seed) {
    const int node = k + 1;
    const double mu = rd.number(require(p, "mu", path), path + ".mu", node, Field::Mu);
    const double sigma_v2 = rd.number_or(p, "sigma_v2", 0.0, path, node, Field::SigmaV2);
    const bool wide = p.value("allow_wide_alpha", false);

    model::RegressorMode regressor = model::IidGaussian{};
    if (p.contains("regressor")) {
        const auto& r = p.at("regressor");
        const std::string rp = path + ".regressor";
        if (r.is_string()) {
            if (r.get<std::string>() != "iid_gaussian") throw ConfigError("unknown regressor mode", rp);
        } else if (r.is_object() && r.contains("ar1_shift")) {
            const auto& a = r.at("ar1_shift");
            model::Ar1Shift ar;
            ar.alpha = rd.number(require(a, "alpha", rp + ".ar1_shift"), rp + ".ar1_shift.alpha", node, Field::Alpha);
            ar.sigma_u2 = rd.number_or(a, "sigma_u2", 1.0, rp + ".ar1_shift", node, Field::SigmaU2);
            regressor = ar;
        } else {
            throw ConfigError("expected \"iid_gaussian\" or {\"ar1_shift\": {...}}", rp);
        }
    }

    Matrix ru;
    if (const auto* ar = std::get_if<model::Ar1Shift>(&regressor)) {
        if (p.contains("ru")) throw ConfigError("covariance is implied by the ar1_shift regressor", path + ".ru");
        ru = model::ar1_covariance(m, *ar);
    } else {
        const auto& r = require(p, "ru", path);
        const std::string rp = path + ".ru";
        if (r.is_array()) {
            ru = matrix(r, m, rp);
        } else if (r.is_object()) {
            const double spread = rd.number_or(r, "spread", 1.0, rp, node, Field::Spread);
            const double trace = rd.number(require(r, "trace", rp), rp + ".trace", node, Field::Trace);
            const std::string basis = r.value("basis", "shared");
            if (basis == "shared") {
                ru = model::build_covariance(m, spread, trace, shared_basis);
            } else if (basis == "independent") {
                CounterRng brng(seed, 0, static_cast<std::uint64_t>(node), 0, Stream::Basis);
                ru = model::build_covariance(m, spread, trace, brng);
            } else if (basis == "identity") {
                ru = model::build_covariance(m, spread, trace, Matrix::Identity(m, m));
            } else {
                throw ConfigError("unknown basis \"" + basis + "\"", rp + ".basis");
            }
        } else {
            throw ConfigError("expected {spread, trace} or a matrix", rp);
        }
    }

    Matrix q = Matrix::Zero(m, m);
    if (p.contains("q")) {
        const auto& qj = p.at("q");
        const std::string qp = path + ".q";
        if (qj.is_array()) {
            q = matrix(qj, m, qp);
        } else if (qj.is_object()) {
            const double sc = rd.number(require(qj, "sigma_c2", qp), qp + ".sigma_c2", node, Field::SigmaC2);
            if (!(sc >= 0.0)) throw ConfigError("must be >= 0", qp + ".sigma_c2");
            q = sc * Matrix::Identity(m, m);
        } else {
            throw ConfigError("expected {sigma_c2} or a matrix", qp);
        }
    }

    return model::make_profile(node, mu, std::move(ru), sigma_v2, std::move(q), regressor, wide);
}

model::ChannelModel parse_channel(const json& c, int k, const Reader& rd, const std::string& path) {
    const int node = k + 1;
    if (!c.is_object()) throw ConfigError("expected an object", path);
    const std::string law = c.value("law", "ideal");
    const json& params = c.contains("params") ? c.at("params") : c;
    const std::string pp = c.contains("params") ? path + ".params" : path;
    if (!params.is_object()) throw ConfigError("expected an object", pp);

    model::ChannelLaw parsed;
    if (law == "ideal") {
        parsed = model::Ideal{};
    } else if (law == "constant") {
        parsed = model::Constant{rd.number(require(params, "h", pp), pp + ".h", node, Field::H)};
    } else if (law == "rayleigh") {
        if (params.contains("sigma_r")) {
            parsed = model::Rayleigh{rd.number(params.at("sigma_r"), pp + ".sigma_r", node, Field::H)};
        } else if (params.contains("mean")) {
            const double mean = rd.number(params.at("mean"), pp + ".mean", node, Field::Mean);
            try {
                parsed = model::Rayleigh{model::rayleigh_from_mean(mean).sigma_r};
            } catch (const ConfigError&) {
                throw ConfigError("Rayleigh mean gain must be > 0", pp + ".mean");
            }
        } else {
            throw ConfigError("rayleigh needs mean or sigma_r", pp);
        }
    } else if (law == "two_point") {
        model::TwoPoint tp;
        tp.h1 = Reader::finite(require(params, "h1", pp).get<double>(), pp + ".h1");
        tp.h2 = Reader::finite(require(params, "h2", pp).get<double>(), pp + ".h2");
        tp.p = params.contains("p") ? Reader::finite(params.at("p").get<double>(), pp + ".p") : 0.5;
        parsed = tp;
    } else {
        throw ConfigError("unknown law \"" + law + "\"", path + ".law");
    }

    const double eev = c.contains("estimation_error_var")
                           ? Reader::finite(c.at("estimation_error_var").get<double>(), path + ".estimation_error_var")
                           : 0.0;
    model::ChannelModel out;
    try {
        out = model::make_channel(parsed, eev);
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), path);
    }
    if (c.contains("m") || c.contains("s")) {
        model::ChannelModel stored = out;
        if (c.contains("m")) stored.m = c.at("m").get<double>();
        if (c.contains("s")) stored.s = c.at("s").get<double>();
        try {
            (void)model::channel_moments(stored);
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), path);
        }
    }
    return out;
}

ExperimentPlan parse_plan(const json& doc, bool& tail_given) {
    ExperimentPlan plan;
    tail_given = false;
    if (!doc.contains("plan")) return plan;
    const auto& p = doc.at("plan");
    if (!p.is_object()) throw ConfigError("expected an object", "plan");
    if (p.contains("mode")) {
        const auto mode = parse_link_mode(p.at("mode").get<std::string>());
        if (!mode) throw ConfigError("unknown mode", "plan.mode");
        plan.mode = *mode;
    }
    if (p.contains("iterations")) plan.iterations = integer(p.at("iterations"), "plan.iterations");
    if (p.contains("runs")) plan.runs = integer(p.at("runs"), "plan.runs");
    if (p.contains("tail")) {
        plan.tail = integer(p.at("tail"), "plan.tail");
        tail_given = true;
    }
    if (p.contains("workers")) plan.workers = integer(p.at("workers"), "plan.workers");
    if (p.contains("sweep")) {
        const auto& s = p.at("sweep");
        SweepSpec sw;
        const std::string param = require(s, "parameter", "plan.sweep").get<std::string>();
        if (param == "mu") {
            sw.parameter = SweepParameter::Mu;
        } else if (param == "s") {
            sw.parameter = SweepParameter::S;
        } else {
            throw ConfigError("expected \"mu\" or \"s\"", "plan.sweep.parameter");
        }
        const auto& v = require(s, "values", "plan.sweep");
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!v[i].is_number()) throw ConfigError("expected a number", "plan.sweep.values[" + std::to_string(i) + "]");
                sw.values.push_back(v[i].get<double>());
            }
        } else if (v.is_object()) {
            // {"start", "stop", "count"}: evenly spaced, endpoints included.
            const double a = require(v, "start", "plan.sweep.values").get<double>();
            const double b = require(v, "stop", "plan.sweep.values").get<double>();
            const int count = integer(require(v, "count", "plan.sweep.values"), "plan.sweep.values.count");
            if (count < 1) throw ConfigError("must be >= 1", "plan.sweep.values.count");
            for (int i = 0; i < count; ++i) sw.values.push_back(count == 1 ? a : a + (b - a) * i / (count - 1));
        } else {
            throw ConfigError("expected a list or {start, stop, count}", "plan.sweep.values");
        }
        if (s.contains("node_focus")) sw.node_focus = integer(s.at("node_focus"), "plan.sweep.node_focus");
        sw.simulate = s.value("simulate", false);
        plan.sweep = std::move(sw);
    }
    return plan;
}

const char* law_name(const model::ChannelLaw& law) {
    switch (law.index()) {
        case 0: return "ideal";
        case 1: return "constant";
        case 2: return "rayleigh";
        default: return "two_point";
    }
}

}  // namespace

json network_to_json(const model::NetworkConfig& net) {
    json doc;
    json w = json::array();
    for (Eigen::Index i = 0; i < net.w_true.size(); ++i) w.push_back(net.w_true[i]);
    doc["network"] = {{"n", net.n}, {"m", net.m}, {"w_true", w}, {"seed", net.seed}};

    json profiles = json::array();
    for (const auto& p : net.profiles) {
        json pj = {{"mu", p.mu}, {"sigma_v2", p.sigma_v2}, {"q", matrix_json(p.q)}};
        if (const auto* ar = std::get_if<model::Ar1Shift>(&p.regressor)) {
            pj["regressor"] = {{"ar1_shift", {{"alpha", ar->alpha}, {"sigma_u2", ar->sigma_u2}}}};
            if (!(ar->alpha > 0.0 && ar->alpha <= 0.5)) pj["allow_wide_alpha"] = true;
        } else {
            pj["regressor"] = "iid_gaussian";
            pj["ru"] = matrix_json(p.ru);
        }
        profiles.push_back(std::move(pj));
    }
    doc["profiles"] = std::move(profiles);

    json channels = json::array();
    for (const auto& c : net.channels) {
        json cj = {{"law", law_name(c.law)}, {"m", c.m}, {"s", c.s}, {"estimation_error_var", c.estimation_error_var}};
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, model::Constant>) {
                    cj["params"] = {{"h", l.h}};
                } else if constexpr (std::is_same_v<T, model::Rayleigh>) {
                    cj["params"] = {{"sigma_r", l.sigma_r}};
                } else if constexpr (std::is_same_v<T, model::TwoPoint>) {
                    cj["params"] = {{"h1", l.h1}, {"h2", l.h2}, {"p", l.p}};
                } else {
                    cj["params"] = json::object();
                }
            },
            c.law);
        channels.push_back(std::move(cj));
    }
    doc["channels"] = std::move(channels);
    return doc;
}

json plan_to_json(const ExperimentPlan& plan) {
    json p = {{"mode", std::string(to_string(plan.mode))},
              {"iterations", plan.iterations},
              {"runs", plan.runs},
              {"tail", plan.tail},
              {"workers", plan.workers}};
    if (plan.sweep) {
        p["sweep"] = {{"parameter", plan.sweep->parameter == SweepParameter::Mu ? "mu" : "s"},
                      {"values", plan.sweep->values},
                      {"node_focus", plan.sweep->node_focus},
                      {"simulate", plan.sweep->simulate}};
    }
    return p;
}

LoadedConfig parse_config_json(const json& doc, const Overrides& ov) {
    if (!doc.is_object()) throw ConfigError("top level must be an object");
    try {
        const auto& nj = require(doc, "network", "");
        const std::string np = "network";
        model::NetworkConfig net;
        net.n = integer(require(nj, "n", np), "network.n");
        net.m = integer(require(nj, "m", np), "network.m");
        if (net.n < 2) throw ConfigError("need at least 2 nodes", "network.n");
        if (net.m < 1) throw ConfigError("filter length must be >= 1", "network.m");
        if (ov.seed) {
            net.seed = *ov.seed;
        } else if (nj.contains("seed")) {
            if (!nj.at("seed").is_number_unsigned() && !nj.at("seed").is_number_integer())
                throw ConfigError("expected a non-negative integer", "network.seed");
            net.seed = nj.at("seed").get<std::uint64_t>();
        }

        const auto& wj = require(nj, "w_true", np);
        net.w_true.resize(net.m);
        if (wj.is_number()) {
            net.w_true.setConstant(Reader::finite(wj.get<double>(), "network.w_true"));
        } else if (wj.is_array() && static_cast<int>(wj.size()) == net.m) {
            for (int i = 0; i < net.m; ++i) {
                if (!wj[i].is_number()) throw ConfigError("expected a number", "network.w_true[" + std::to_string(i) + "]");
                net.w_true[i] = Reader::finite(wj[i].get<double>(), "network.w_true");
            }
        } else {
            throw ConfigError("expected a number or " + std::to_string(net.m) + " numbers", "network.w_true");
        }

        const Reader rd(net.seed);
        CounterRng basis_rng(net.seed, 0, 0, 0, Stream::Basis);
        const Matrix shared_basis = model::haar_orthogonal(net.m, basis_rng);

        const auto& pl = require(doc, "profiles", "");
        const json default_channel = {{"law", "ideal"}};
        const auto& cl = doc.contains("channels") ? doc.at("channels") : default_channel;
        for (int k = 0; k < net.n; ++k) {
            std::string path;
            const auto& pj = entry(pl, k, net.n, "profiles", path);
            net.profiles.push_back(parse_profile(pj, k, net.m, rd, path, shared_basis, net.seed));
            const auto& cj = entry(cl, k, net.n, "channels", path);
            net.channels.push_back(parse_channel(cj, k, rd, path));
        }
        net.validate();

        bool tail_given = false;
        ExperimentPlan plan = parse_plan(doc, tail_given);
        if (ov.mode) {
            const auto mode = parse_link_mode(*ov.mode);
            if (!mode) throw ConfigError("unknown mode \"" + *ov.mode + "\"", "--mode");
            plan.mode = *mode;
        }
        if (ov.runs) plan.runs = *ov.runs;
        if (ov.iterations) plan.iterations = *ov.iterations;
        if (ov.workers) plan.workers = *ov.workers;
        if (ov.tail) {
            plan.tail = *ov.tail;
            tail_given = true;
        }
        // A defaulted window shrinks with a short run; an explicit one is checked.
        if (!tail_given && plan.tail > plan.iterations) plan.tail = plan.iterations;
        plan.validate();

        LoadedConfig out;
        out.resolved = network_to_json(net);
        out.resolved["plan"] = plan_to_json(plan);
        out.hash = fnv1a(out.resolved.dump());
        out.network = std::move(net);
        out.plan = std::move(plan);
        return out;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed field: ") + e.what());
    }
}

LoadedConfig parse_config_text(const std::string& text, const Overrides& ov) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    return parse_config_json(doc, ov);
}

LoadedConfig parse_config(const std::filesystem::path& path, const Overrides& ov) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), ov);
}

std::uint64_t fnv1a(const std::string& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace ilms::config
