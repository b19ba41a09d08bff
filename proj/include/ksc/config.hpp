#pragma once

// Declarative scenario files: one JSON object whose sections mirror the
// library modules. Every field is optional except where a task needs it;
// unknown fields are rejected with their full path.

#include "errors.hpp"
#include "exact.hpp"
#include "lr.hpp"
#include "nonlinear.hpp"
#include "pointwise.hpp"
#include "spectral.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ksc {

using Json = nlohmann::json;

enum class Task { Spectrum, CriticalSet, Biortho, Control1D, ControlPoint, MinimalTime, ControlND, Nonlinear, Simulate };

inline const std::vector<std::pair<std::string, Task>>& task_names() {
    static const std::vector<std::pair<std::string, Task>> names = {
        {"spectrum", Task::Spectrum},         {"critical-set", Task::CriticalSet}, {"biortho", Task::Biortho},
        {"control-1d", Task::Control1D},      {"control-point", Task::ControlPoint},
        {"minimal-time", Task::MinimalTime},  {"control-nd", Task::ControlND},     {"nonlinear", Task::Nonlinear},
        {"simulate", Task::Simulate}};
    return names;
}

inline std::optional<Task> parse_task(const std::string& s) {
    for (const auto& [n, t] : task_names())
        if (n == s) return t;
    return std::nullopt;
}

inline std::string task_name(Task t) {
    for (const auto& [n, v] : task_names())
        if (v == t) return n;
    return "?";
}

inline bool is_control_task(Task t) {
    return t == Task::Control1D || t == Task::ControlPoint || t == Task::ControlND || t == Task::Nonlinear;
}

struct InitialSpec {
    enum class Kind { Mode, Random, Coeffs };
    Kind kind = Kind::Mode;
    int k = 1, j = 1;
    double amplitude = 1.0;
    double decay = 2.0;  // Random: coefficient scale 1/(1 + k^2 + j^2)^{decay/2}
    std::vector<std::tuple<int, int, double>> coeffs;
};

struct PointConfig {
    std::string kind = "algebraic";
    std::string value;                       // rational / real
    std::vector<long long> coeffs{-1, 2, 1}; // algebraic: x^2 + 2x - 1, root sqrt(2) - 1
    int root = 0;
    int terms = 6;                           // liouville
    int k_max = 10000;

    PointSpec build() const {
        PointSpec p;
        if (kind == "rational") {
            auto r = detail::parse_rational(value);
            require(r.has_value(), ErrorCode::Config, "pointwise_control.point.value is not a rational");
            p = PointSpec::rational(*r);
        } else if (kind == "real") {
            p = PointSpec::real(value);
        } else if (kind == "liouville") {
            p = PointSpec::liouville(terms);
        } else {
            p = PointSpec::algebraic(coeffs, root);
        }
        p.k_max = k_max;
        return p;
    }
};

struct Scenario {
    Task task = Task::Spectrum;
    std::string source_text;  // canonical dump used for hashing
    std::uint64_t seed = 0;
    std::string output = "out";

    // spectral_core
    std::string a_text = "pi", nu_text = "0";
    Length a;
    ExactReal nu;
    CrossSection cs;
    int K_x = 8, J_y = 8;
    double crit_tol = 1e-9;
    std::optional<SpectrumSpec> spec;

    InitialSpec initial;

    // biorthogonal
    int bio_j = 1, bio_K = 10;
    std::vector<double> bio_T{0.5, 1.0};
    std::vector<double> bio_exponents;  // overrides the KS family when set
    double bio_eps = 0.1;

    // control_1d
    int c1_j = 1, c1_K = 8;
    double c1_T = 1.0;
    std::vector<int> scan_j;
    std::vector<double> scan_T;
    int samples = 201;

    // pointwise_control
    PointConfig point;
    int pc_j = 1, pc_K = 8;
    double pc_T = 1.0, pc_margin = 0.1;
    std::optional<double> witness_T;

    // lr_controller
    double lr_T = 1.0, lr_rho = 0.5;
    std::optional<double> lr_beta;
    std::string lr_geometry = "boundary";
    std::vector<std::pair<double, double>> lr_omega;
    double lr_theta = 0.5;

    // nonlinear_control
    double nl_T = 1.0;
    std::optional<double> nl_C;  // absent: fitted from LR runs
    std::vector<double> nl_fit_T{0.25, 0.5, 1.0};
    double nl_q = 1.2;
    std::optional<double> nl_p;
    double nl_tol = 1e-10;
    int nl_max_iter = 30;
    int nl_nodes = 48, nl_coast = 32, nl_resolution = -1;
    bool nl_R_guess = false;
    bool nl_verify = true;

    // modal_solver (simulate)
    double sim_T = 1.0;
    int sim_samples = 101;
    bool sim_nonlinear = false;
};

namespace cfg {

// Reads keys from one JSON object and remembers which were consumed.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorCode::Config, where() + ": expected an object");
    }

    std::string where(const std::string& key = "") const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    const Json& at(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const Json::exception&) {
            fail(ErrorCode::Config, where(key) + ": wrong type");
        }
    }
    template <class T>
    void get_opt(const std::string& key, std::optional<T>& out) {
        if (!has(key)) return;
        T v{};
        get(key, v);
        out = v;
    }
    // numbers or strings ("pi", "7/1", "0.25")
    void get_text(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const Json& v = j_.at(key);
        if (v.is_string()) out = v.get<std::string>();
        else if (v.is_number_integer()) out = std::to_string(v.get<long long>());
        else if (v.is_number()) {
            std::ostringstream os;
            os.precision(17);
            os << v.get<double>();
            out = os.str();
        } else fail(ErrorCode::Config, where(key) + ": expected a number or a string");
    }
    std::optional<Reader> section(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return Reader(j_.at(key), where(key));
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(ErrorCode::Config, "unknown field " + where(it.key()));
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void positive(double v, const std::string& what) {
    if (!(v > 0)) fail(ErrorCode::Config, what + " must be positive");
}

inline std::vector<double> read_mu_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot open eigenvalue file " + path);
    std::vector<double> mu;
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::getline(in, tok);
            continue;
        }
        try {
            mu.push_back(std::stod(tok));
        } catch (const std::exception&) {
            fail(ErrorCode::Config, "bad value '" + tok + "' in eigenvalue file " + path);
        }
    }
    return mu;
}

}  // namespace cfg

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline Scenario parse_config_text(const std::string& text, Task task, const std::string& base_dir = ".") {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::parse_error& e) {
        auto [line, col] = line_column(text, e.byte);
        fail(ErrorCode::Config, "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col));
    }
    Scenario sc;
    sc.task = task;
    cfg::Reader r(root, "");
    if (r.has("task")) {
        std::string t;
        r.get("task", t);
        auto pt = parse_task(t);
        if (!pt) fail(ErrorCode::Config, "task: unknown task '" + t + "'");
        if (*pt != task) fail(ErrorCode::Config, "task: config is for '" + t + "' but '" + task_name(task) + "' was requested");
    }
    r.get("seed", sc.seed);
    r.get("output", sc.output);

    std::string cs_kind = "box";
    std::vector<std::string> dims{"pi"};
    std::vector<double> mu_ext;
    if (auto s = r.section("spectral_core")) {
        s->get_text("a", sc.a_text);
        s->get_text("nu", sc.nu_text);
        s->get("K_x", sc.K_x);
        s->get("J_y", sc.J_y);
        s->get("crit_tol", sc.crit_tol);
        if (auto c = s->section("cross_section")) {
            c->get("kind", cs_kind);
            if (cs_kind == "box") {
                if (c->has("dims")) {
                    dims.clear();
                    const Json& d = c->at("dims");
                    if (!d.is_array() || d.empty()) fail(ErrorCode::Config, c->where("dims") + ": expected a nonempty array");
                    for (const auto& v : d) dims.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                }
            } else if (cs_kind == "external") {
                c->get("mu", mu_ext);
            } else if (cs_kind == "external_file") {
                std::string path;
                c->get("path", path);
                if (path.empty()) fail(ErrorCode::Config, c->where("path") + ": required for external_file");
                if (path[0] != '/') path = base_dir + "/" + path;
                mu_ext = cfg::read_mu_file(path);
            } else {
                fail(ErrorCode::Config, c->where("kind") + ": expected box, external or external_file");
            }
            c->finish();
        }
        s->finish();
    }
    auto a = parse_length(sc.a_text);
    if (!a) fail(ErrorCode::Config, "spectral_core.a: cannot parse '" + sc.a_text + "'");
    sc.a = *a;
    auto nu = ExactReal::parse(sc.nu_text);
    if (!nu) fail(ErrorCode::Config, "spectral_core.nu: cannot parse '" + sc.nu_text + "'");
    sc.nu = *nu;
    if (cs_kind == "box") {
        std::vector<Length> L;
        for (const auto& d : dims) {
            auto l = parse_length(d);
            if (!l) fail(ErrorCode::Config, "spectral_core.cross_section.dims: cannot parse '" + d + "'");
            L.push_back(*l);
        }
        sc.cs = CrossSection::box(L);
    } else {
        sc.cs = CrossSection::external(mu_ext);
    }

    if (auto s = r.section("initial")) {
        std::string kind = "mode";
        s->get("kind", kind);
        if (kind == "mode") sc.initial.kind = InitialSpec::Kind::Mode;
        else if (kind == "random") sc.initial.kind = InitialSpec::Kind::Random;
        else if (kind == "coeffs") sc.initial.kind = InitialSpec::Kind::Coeffs;
        else fail(ErrorCode::Config, s->where("kind") + ": expected mode, random or coeffs");
        s->get("k", sc.initial.k);
        s->get("j", sc.initial.j);
        s->get("amplitude", sc.initial.amplitude);
        s->get("decay", sc.initial.decay);
        if (s->has("coeffs")) {
            const Json& c = s->at("coeffs");
            if (!c.is_array()) fail(ErrorCode::Config, s->where("coeffs") + ": expected [[k, j, value], ...]");
            for (const auto& e : c) {
                if (!e.is_array() || e.size() != 3) fail(ErrorCode::Config, s->where("coeffs") + ": expected [k, j, value]");
                sc.initial.coeffs.emplace_back(e[0].get<int>(), e[1].get<int>(), e[2].get<double>());
            }
        }
        s->finish();
    }
    if (auto s = r.section("biorthogonal")) {
        s->get("j", sc.bio_j);
        s->get("K", sc.bio_K);
        s->get("T", sc.bio_T);
        s->get("exponents", sc.bio_exponents);
        s->get("eps", sc.bio_eps);
        s->finish();
    }
    if (auto s = r.section("control_1d")) {
        s->get("j", sc.c1_j);
        s->get("K_trunc", sc.c1_K);
        s->get("T", sc.c1_T);
        s->get("samples", sc.samples);
        if (auto c = s->section("cost_scan")) {
            c->get("j", sc.scan_j);
            c->get("T", sc.scan_T);
            c->finish();
        }
        s->finish();
    }
    if (auto s = r.section("pointwise_control")) {
        s->get("j", sc.pc_j);
        s->get("K_trunc", sc.pc_K);
        s->get("T", sc.pc_T);
        s->get("margin", sc.pc_margin);
        s->get_opt("witness_T", sc.witness_T);
        if (auto p = s->section("point")) {
            p->get("kind", sc.point.kind);
            p->get_text("value", sc.point.value);
            p->get("coeffs", sc.point.coeffs);
            p->get("root", sc.point.root);
            p->get("terms", sc.point.terms);
            p->get("k_max", sc.point.k_max);
            p->finish();
            const std::set<std::string> kinds{"rational", "real", "algebraic", "liouville"};
            if (!kinds.count(sc.point.kind))
                fail(ErrorCode::Config, "pointwise_control.point.kind: expected rational, real, algebraic or liouville");
        }
        s->finish();
    }
    if (auto s = r.section("lr_controller")) {
        s->get("T", sc.lr_T);
        s->get("rho", sc.lr_rho);
        s->get_opt("beta", sc.lr_beta);
        s->get("geometry", sc.lr_geometry);
        s->get("theta", sc.lr_theta);
        s->get("samples", sc.samples);
        if (s->has("omega")) {
            const Json& o = s->at("omega");
            if (!o.is_array()) fail(ErrorCode::Config, s->where("omega") + ": expected [[lo, hi], ...]");
            for (const auto& e : o) {
                if (!e.is_array() || e.size() != 2) fail(ErrorCode::Config, s->where("omega") + ": expected [lo, hi]");
                sc.lr_omega.emplace_back(e[0].get<double>(), e[1].get<double>());
            }
        }
        if (sc.lr_geometry != "boundary" && sc.lr_geometry != "point")
            fail(ErrorCode::Config, s->where("geometry") + ": expected boundary or point");
        s->finish();
    }
    if (auto s = r.section("nonlinear_control")) {
        s->get("T", sc.nl_T);
        s->get_opt("C_cost", sc.nl_C);
        s->get("fit_T", sc.nl_fit_T);
        s->get("q_w", sc.nl_q);
        s->get_opt("p", sc.nl_p);
        s->get("tol", sc.nl_tol);
        s->get("max_iter", sc.nl_max_iter);
        s->get("nodes_per_phase", sc.nl_nodes);
        s->get("coast_nodes", sc.nl_coast);
        s->get("rhs_resolution", sc.nl_resolution);
        s->get("R_guess", sc.nl_R_guess);
        s->get("verify", sc.nl_verify);
        s->finish();
    }
    if (auto s = r.section("modal_solver")) {
        s->get("T", sc.sim_T);
        s->get("samples", sc.sim_samples);
        s->get("nonlinear", sc.sim_nonlinear);
        s->finish();
    }
    r.finish();

    cfg::positive(sc.c1_T, "control_1d.T");
    cfg::positive(sc.pc_T, "pointwise_control.T");
    cfg::positive(sc.lr_T, "lr_controller.T");
    cfg::positive(sc.nl_T, "nonlinear_control.T");
    cfg::positive(sc.sim_T, "modal_solver.T");
    if (sc.samples < 2 || sc.sim_samples < 2) fail(ErrorCode::Config, "sample counts must be at least 2");

    try {
        sc.spec.emplace(sc.a, sc.nu, sc.cs, sc.K_x, sc.J_y, sc.crit_tol);
    } catch (const Error& e) {
        fail(ErrorCode::Config, std::string("spectral_core: ") + e.what());
    }
    if (is_control_task(task)) {
        auto v = critical_set_check(*sc.spec);
        if (v.kind == CriticalVerdict::Kind::Critical)
            fail(ErrorCode::CriticalParameter, "nu is in the critical set: rates of modes (" + std::to_string(v.k) + "," +
                                                   std::to_string(v.j) + ") and (" + std::to_string(v.l) + "," +
                                                   std::to_string(v.j) + ") coincide");
    }
    sc.source_text = root.dump();
    return sc;
}

inline Scenario parse_config(const std::string& path, Task task) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto slash = path.find_last_of('/');
    return parse_config_text(ss.str(), task, slash == std::string::npos ? "." : path.substr(0, slash));
}

}  // namespace ksc
