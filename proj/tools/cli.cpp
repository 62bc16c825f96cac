#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>

namespace regstab::cli {

namespace {

// ============================================================================
// JSON schema helpers
// ============================================================================

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

double get_number(const json& j, const std::string& path) {
    if (!j.is_number())
        throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v))
        throw ConfigError(path, "expected a finite number");
    return v;
}

double get_nonnegative(const json& j, const std::string& path) {
    const double v = get_number(j, path);
    if (v < 0.0)
        throw ConfigError(path, "expected a nonnegative number");
    return v;
}

std::size_t get_count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0)
        throw ConfigError(path, "expected a nonnegative integer");
    return j.get<std::size_t>();
}

Matrix parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError(path, "expected a non-empty array of rows");
    const std::size_t rows = j.size();
    std::size_t       cols = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        const auto& row = j[i];
        if (!row.is_array() || row.empty())
            throw ConfigError(child(path, i), "expected a non-empty array of numbers");
        if (i == 0)
            cols = row.size();
        else if (row.size() != cols)
            throw ConfigError(child(path, i), "row has " + std::to_string(row.size()) + " entries, expected " +
                                                  std::to_string(cols));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < cols; ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                get_number(j[i][k], child(child(path, i), k));
    return m;
}

Vector parse_vector(const json& j, const std::string& path) {
    if (!j.is_array())
        throw ConfigError(path, "expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = get_number(j[i], child(path, i));
    return v;
}

void check_dims(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& path) {
    if (m.rows() != rows || m.cols() != cols)
        throw ConfigError(path, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix, got " +
                                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

/// `key` (one matrix for all t) or `key_t` (a list indexed by t).
MatrixSequence parse_matrix_sequence(const json& obj, const std::string& path, const std::string& key,
                                     Eigen::Index rows, Eigen::Index cols) {
    const std::string tkey = key + "_t";
    if (obj.contains(key) && obj.contains(tkey))
        throw ConfigError(path, "give either '" + key + "' or '" + tkey + "', not both");
    if (obj.contains(key)) {
        Matrix m = parse_matrix(obj[key], child(path, key));
        check_dims(m, rows, cols, child(path, key));
        return MatrixSequence::constant(std::move(m));
    }
    if (obj.contains(tkey)) {
        const auto& list = obj[tkey];
        if (!list.is_array() || list.empty())
            throw ConfigError(child(path, tkey), "expected a non-empty array of matrices");
        std::vector<Matrix> items;
        for (std::size_t t = 0; t < list.size(); ++t) {
            Matrix m = parse_matrix(list[t], child(child(path, tkey), t));
            check_dims(m, rows, cols, child(child(path, tkey), t));
            items.push_back(std::move(m));
        }
        return MatrixSequence::table(std::move(items));
    }
    throw ConfigError(path, "missing '" + key + "'");
}

std::vector<std::size_t> parse_horizon_value(const json& j, const std::string& path) {
    std::vector<std::size_t> out;
    if (j.is_string()) {
        try {
            out = parse_horizons(j.get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(path, e.what());
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(get_count(j[i], child(path, i)));
    } else {
        throw ConfigError(path, "expected \"a:b[:step]\" or an array of integers");
    }
    if (out.empty())
        throw ConfigError(path, "no horizons");
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1])
            throw ConfigError(path, "horizons must be strictly increasing");
    return out;
}

std::vector<double> parse_grid(const json& j, const std::string& path) {
    std::vector<double> grid;
    if (j.is_string()) {
        // a:b:step over reals
        const std::string s = j.get<std::string>();
        std::vector<double> parts;
        std::stringstream   ss(s);
        std::string         piece;
        while (std::getline(ss, piece, ':')) {
            try {
                parts.push_back(io::parse_number(piece));
            } catch (const std::exception&) {
                throw ConfigError(path, "malformed grid '" + s + "'");
            }
        }
        if (parts.size() != 3 || !(parts[2] > 0.0))
            throw ConfigError(path, "grid must be \"start:stop:step\" with step > 0");
        const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
        for (std::size_t i = 0; i < count; ++i)
            grid.push_back(parts[0] + parts[2] * static_cast<double>(i));
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            grid.push_back(get_number(j[i], child(path, i)));
    } else {
        throw ConfigError(path, "expected \"start:stop:step\" or an array of numbers");
    }
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!(grid[i] > 0.0 && grid[i] < 1.0))
            throw ConfigError(child(path, i), "discount factors must lie in (0, 1)");
    return grid;
}

RecipeKind parse_recipe(const std::string& s, const std::string& path) {
    if (s == "eigvec")
        return RecipeKind::ConstantEigvec;
    if (s == "phi")
        return RecipeKind::PhiAligned;
    if (s == "random")
        return RecipeKind::RandomBall;
    throw ConfigError(path, "unknown recipe '" + s + "' (expected eigvec, phi or random)");
}

void apply_threshold(ExperimentConfig& cfg, const std::string& key, double value, const std::string& path) {
    if (key == "bounded_slope")
        cfg.growth.bounded_slope = value;
    else if (key == "linear_slope")
        cfg.growth.linear_slope = value;
    else if (key == "marginal_tol")
        cfg.stability.marginal_tol = value;
    else if (key == "slope_tol")
        cfg.stability.slope_tol = value;
    else if (key == "tail_tol") {
        cfg.stability.tail_tol = value;
        cfg.certificate_options.tail_tol = value;
    } else
        throw ConfigError(path, "unknown threshold '" + key + "'");
}

void parse_counterexample(const json& doc, ExperimentConfig& cfg) {
    auto& cx = cfg.counterexample;
    cx.A = Matrix::Constant(1, 1, 2.0);
    cx.B = Matrix::Constant(1, 1, 1.0);
    cx.Q = Matrix::Identity(1, 1);
    cx.R = Matrix::Identity(1, 1);
    for (int i = 1; i <= 19; ++i)
        cx.alpha_grid.push_back(0.05 * i);
    cx.alpha = 0.1;
    cx.T_grid = {1, 2, 5, 10, 20, 50, 100, 200, 500};
    cx.seed = cfg.recipe.seed;
    if (!doc.contains("counterexample"))
        return;
    const std::string path = "/counterexample";
    const json&       c = doc["counterexample"];
    if (!c.is_object())
        throw ConfigError(path, "expected an object");
    if (c.contains("A")) {
        cx.A = parse_matrix(c["A"], path + "/A");
        cx.alpha.reset();
    }
    const Eigen::Index n = cx.A.rows();
    check_dims(cx.A, n, n, path + "/A");
    if (c.contains("B"))
        cx.B = parse_matrix(c["B"], path + "/B");
    if (cx.B.rows() != n)
        throw ConfigError(path + "/B", "expected " + std::to_string(n) + " rows");
    const Eigen::Index m = cx.B.cols();
    cx.Q = c.contains("Q") ? parse_matrix(c["Q"], path + "/Q") : Matrix::Identity(n, n);
    check_dims(cx.Q, n, n, path + "/Q");
    cx.R = c.contains("R") ? parse_matrix(c["R"], path + "/R") : Matrix::Identity(m, m);
    check_dims(cx.R, m, m, path + "/R");
    if (c.contains("alpha_grid"))
        cx.alpha_grid = parse_grid(c["alpha_grid"], path + "/alpha_grid");
    if (c.contains("alpha")) {
        const double a = get_number(c["alpha"], path + "/alpha");
        if (!(a > 0.0 && a < 1.0))
            throw ConfigError(path + "/alpha", "discount factor must lie in (0, 1)");
        cx.alpha = a;
    }
    if (c.contains("W"))
        cx.W = get_nonnegative(c["W"], path + "/W");
    if (c.contains("X"))
        cx.X = get_nonnegative(c["X"], path + "/X");
    if (c.contains("T_grid"))
        cx.T_grid = parse_horizon_value(c["T_grid"], path + "/T_grid");
}

// ============================================================================
// Command helpers
// ============================================================================

std::size_t longest_horizon(const ExperimentConfig& cfg) {
    std::size_t T = cfg.T;
    if (!cfg.horizons.empty())
        T = std::max(T, cfg.horizons.back());
    return T;
}

void require_loop(const ExperimentConfig& cfg) {
    if (!cfg.system)
        throw ConfigError("/system", "missing");
    if (!cfg.costs)
        throw ConfigError("/costs", "missing");
    if (cfg.policies.empty())
        throw ConfigError("/policies", "at least one policy required");
}

DisturbanceGenerator generator_for(const ExperimentConfig& cfg, const PolicySpec& p) {
    const MatrixSequence F = closed_loop_sequence(*cfg.system, p.policy, std::max<std::size_t>(longest_horizon(cfg), 1));
    return make_generator(cfg.recipe, F);
}

std::string disturbance_id(const ExperimentConfig& cfg) {
    std::string id = std::string(to_string(cfg.recipe.kind)) + ":W=" + io::format_number(cfg.recipe.W);
    if (cfg.recipe.kind == RecipeKind::RandomBall)
        id += ":seed=" + std::to_string(cfg.recipe.seed);
    return id;
}

std::vector<const PolicySpec*> selected(const ExperimentConfig& cfg) {
    std::vector<const PolicySpec*> out;
    for (const auto& p : cfg.policies)
        out.push_back(&p);
    return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

} // namespace

// ============================================================================
// Parsing
// ============================================================================

std::vector<std::size_t> parse_horizons(const std::string& spec) {
    std::vector<std::size_t> parts;
    std::stringstream        ss(spec);
    std::string              piece;
    while (std::getline(ss, piece, ':')) {
        if (piece.empty() || piece.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("--horizons", "malformed horizon spec '" + spec + "'");
        parts.push_back(static_cast<std::size_t>(std::stoull(piece)));
    }
    if (parts.size() < 2 || parts.size() > 3)
        throw ConfigError("--horizons", "expected a:b or a:b:step, got '" + spec + "'");
    const std::size_t step = parts.size() == 3 ? parts[2] : 1;
    if (step == 0 || parts[1] < parts[0])
        throw ConfigError("--horizons", "empty horizon range '" + spec + "'");
    std::vector<std::size_t> out;
    for (std::size_t T = parts[0]; T <= parts[1]; T += step)
        out.push_back(T);
    return out;
}

ExperimentConfig parse_config(const json& doc, const Overrides& ov) {
    if (!doc.is_object())
        throw ConfigError("", "config must be a JSON object");
    ExperimentConfig cfg;

    std::optional<Eigen::Index> n_decl, m_decl;
    if (doc.contains("n"))
        n_decl = static_cast<Eigen::Index>(get_count(doc["n"], "/n"));
    if (doc.contains("m"))
        m_decl = static_cast<Eigen::Index>(get_count(doc["m"], "/m"));

    // Thresholds first so later validation can use them.
    if (doc.contains("thresholds")) {
        const auto& th = doc["thresholds"];
        if (!th.is_object())
            throw ConfigError("/thresholds", "expected an object");
        for (auto it = th.begin(); it != th.end(); ++it)
            apply_threshold(cfg, it.key(), get_number(it.value(), "/thresholds/" + it.key()),
                            "/thresholds/" + it.key());
    }
    for (const auto& kv : ov.thresholds) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--threshold", "expected key=value, got '" + kv + "'");
        double value = 0.0;
        try {
            value = io::parse_number(kv.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("--threshold", "malformed value in '" + kv + "'");
        }
        apply_threshold(cfg, kv.substr(0, eq), value, "--threshold");
    }

    // Disturbance recipe.
    cfg.recipe.kind = RecipeKind::ConstantEigvec;
    cfg.recipe.W = 1.0;
    if (doc.contains("disturbance")) {
        const auto& d = doc["disturbance"];
        if (!d.is_object())
            throw ConfigError("/disturbance", "expected an object");
        if (d.contains("recipe")) {
            if (!d["recipe"].is_string())
                throw ConfigError("/disturbance/recipe", "expected a string");
            cfg.recipe.kind = parse_recipe(d["recipe"].get<std::string>(), "/disturbance/recipe");
        }
        if (d.contains("W"))
            cfg.recipe.W = get_nonnegative(d["W"], "/disturbance/W");
        if (d.contains("seed"))
            cfg.recipe.seed = get_count(d["seed"], "/disturbance/seed");
        if (d.contains("w0"))
            cfg.recipe.w0 = parse_vector(d["w0"], "/disturbance/w0");
    }
    if (ov.recipe)
        cfg.recipe.kind = parse_recipe(*ov.recipe, "--recipe");
    if (ov.seed)
        cfg.recipe.seed = *ov.seed;
    cfg.recipe.provenance = std::string("recipe=") + to_string(cfg.recipe.kind);

    // System.
    if (doc.contains("system")) {
        const auto& s = doc["system"];
        if (!s.is_object())
            throw ConfigError("/system", "expected an object");
        const json&  Aj = s.contains("A") ? s["A"] : (s.contains("A_t") && s["A_t"].is_array() && !s["A_t"].empty()
                                                          ? s["A_t"][0]
                                                          : json());
        const Matrix A0 = parse_matrix(Aj, s.contains("A") ? "/system/A" : "/system/A_t/0");
        const Eigen::Index n = A0.rows();
        if (n_decl && *n_decl != n)
            throw ConfigError("/system/A", "declared n=" + std::to_string(*n_decl) + " but A has " +
                                               std::to_string(n) + " rows");
        const json& Bj = s.contains("B") ? s["B"] : (s.contains("B_t") && s["B_t"].is_array() && !s["B_t"].empty()
                                                         ? s["B_t"][0]
                                                         : json());
        const Matrix B0 = parse_matrix(Bj, s.contains("B") ? "/system/B" : "/system/B_t/0");
        const Eigen::Index m = B0.cols();
        if (m_decl && *m_decl != m)
            throw ConfigError("/system/B", "declared m=" + std::to_string(*m_decl) + " but B has " +
                                               std::to_string(m) + " columns");
        MatrixSequence A = parse_matrix_sequence(s, "/system", "A", n, n);
        MatrixSequence B = parse_matrix_sequence(s, "/system", "B", n, m);
        if (A.is_constant() && B.is_constant()) {
            cfg.system = SystemDynamics::lti(A.at(0), B.at(0));
        } else {
            const std::size_t len = std::min(A.length(), B.length());
            std::vector<Matrix> As, Bs;
            for (std::size_t t = 0; t < len; ++t) {
                As.push_back(A.at(t));
                Bs.push_back(B.at(t));
            }
            cfg.system = SystemDynamics::ltv(std::move(As), std::move(Bs));
        }
    }

    const Eigen::Index n = cfg.system ? cfg.system->n() : n_decl.value_or(0);
    const Eigen::Index m = cfg.system ? cfg.system->m() : m_decl.value_or(0);

    // Costs.
    if (doc.contains("costs")) {
        if (!cfg.system)
            throw ConfigError("/costs", "costs given without a system");
        const auto& c = doc["costs"];
        if (!c.is_object())
            throw ConfigError("/costs", "expected an object");
        MatrixSequence Q = parse_matrix_sequence(c, "/costs", "Q", n, n);
        MatrixSequence R = parse_matrix_sequence(c, "/costs", "R", m, m);
        try {
            cfg.costs.emplace(std::move(Q), std::move(R));
        } catch (const AssumptionViolation& e) {
            throw ConfigError("/costs", e.what());
        }
    }

    // Policies.
    if (doc.contains("policies")) {
        if (!cfg.system)
            throw ConfigError("/policies", "policies given without a system");
        const auto& list = doc["policies"];
        if (!list.is_array())
            throw ConfigError("/policies", "expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = child("/policies", i);
            const auto&       p = list[i];
            if (!p.is_object())
                throw ConfigError(path, "expected an object");
            PolicySpec spec{p.contains("id") && p["id"].is_string() ? p["id"].get<std::string>()
                                                                      : "policy" + std::to_string(i),
                            LinearPolicy(parse_matrix_sequence(p, path, "K", m, n))};
            if (spec.id.empty() || spec.id.find_first_of("/\\ ,") != std::string::npos)
                throw ConfigError(child(path, "id"), "policy ids must be non-empty without '/', '\\', ',' or spaces");
            if (p.contains("d")) {
                Vector d = parse_vector(p["d"], child(path, "d"));
                if (d.size() != m)
                    throw ConfigError(child(path, "d"), "expected length " + std::to_string(m));
                spec.policy = spec.policy.with_offsets(VectorSequence::constant(std::move(d)));
            }
            for (const auto& other : cfg.policies)
                if (other.id == spec.id)
                    throw ConfigError(child(path, "id"), "duplicate policy id '" + spec.id + "'");
            cfg.policies.push_back(std::move(spec));
        }
    }
    if (ov.policy) {
        auto it = std::find_if(cfg.policies.begin(), cfg.policies.end(),
                               [&](const PolicySpec& p) { return p.id == *ov.policy; });
        if (it == cfg.policies.end())
            throw ConfigError("--policy", "no policy with id '" + *ov.policy + "'");
        PolicySpec keep = *it;
        cfg.policies = {std::move(keep)};
    }

    // Initial state and horizons.
    cfg.x0 = Vector::Zero(n);
    if (doc.contains("x0")) {
        cfg.x0 = parse_vector(doc["x0"], "/x0");
        if (cfg.x0.size() != n)
            throw ConfigError("/x0", "expected length " + std::to_string(n));
    }
    cfg.X = doc.contains("X") ? get_nonnegative(doc["X"], "/X") : cfg.x0.norm();
    if (cfg.x0.norm() > cfg.X * (1.0 + 1e-12))
        throw ConfigError("/x0", "initial state norm exceeds X");
    if (cfg.recipe.w0 && cfg.recipe.w0->size() != n)
        throw ConfigError("/disturbance/w0", "expected length " + std::to_string(n));

    if (doc.contains("horizons"))
        cfg.horizons = parse_horizon_value(doc["horizons"], "/horizons");
    if (ov.horizons)
        cfg.horizons = parse_horizons(*ov.horizons);
    if (cfg.horizons.empty())
        cfg.horizons = parse_horizons("1:100");
    cfg.T = doc.contains("T") ? get_count(doc["T"], "/T") : cfg.horizons.back();
    if (cfg.system && cfg.system->kind() == SystemKind::LTV && !cfg.system->covers(longest_horizon(cfg)))
        throw ConfigError("/system", "time-varying matrices must cover the longest horizon (" +
                                         std::to_string(longest_horizon(cfg)) + " steps)");
    if (cfg.costs && !cfg.costs->covers(longest_horizon(cfg)))
        throw ConfigError("/costs", "time-varying costs must cover t = 0.." + std::to_string(longest_horizon(cfg)));
    for (const auto& p : cfg.policies)
        if (!p.policy.gains().defined_through(longest_horizon(cfg)))
            throw ConfigError("/policies", "gains of '" + p.id + "' must cover t = 0.." +
                                               std::to_string(longest_horizon(cfg)));

    // Certificate.
    cfg.certificate = ov.certificate;
    cfg.certificate_options.seed = cfg.recipe.seed;
    if (doc.contains("certificate")) {
        const auto& c = doc["certificate"];
        if (!c.is_object())
            throw ConfigError("/certificate", "expected an object");
        if (c.contains("enabled")) {
            if (!c["enabled"].is_boolean())
                throw ConfigError("/certificate/enabled", "expected a boolean");
            cfg.certificate = cfg.certificate || c["enabled"].get<bool>();
        }
        if (c.contains("T_max"))
            cfg.certificate_options.T_max = get_count(c["T_max"], "/certificate/T_max");
        if (c.contains("trials"))
            cfg.certificate_options.trials = get_count(c["trials"], "/certificate/trials");
    }

    parse_counterexample(doc, cfg);

    // Effective settings, defaults included.
    json meta;
    meta["n"] = n;
    meta["m"] = m;
    meta["T"] = cfg.T;
    meta["x0"] = io::to_json(cfg.x0);
    meta["X"] = cfg.X;
    meta["disturbance"] = {{"recipe", to_string(cfg.recipe.kind)}, {"W", cfg.recipe.W}, {"seed", cfg.recipe.seed}};
    if (cfg.recipe.w0)
        meta["disturbance"]["w0"] = io::to_json(*cfg.recipe.w0);
    meta["horizons"] = {{"first", cfg.horizons.front()}, {"last", cfg.horizons.back()}, {"count", cfg.horizons.size()}};
    meta["thresholds"] = {{"bounded_slope", cfg.growth.bounded_slope},
                          {"linear_slope", cfg.growth.linear_slope},
                          {"marginal_tol", cfg.stability.marginal_tol},
                          {"slope_tol", cfg.stability.slope_tol},
                          {"tail_tol", cfg.stability.tail_tol}};
    json ids = json::array();
    for (const auto& p : cfg.policies)
        ids.push_back(p.id);
    meta["policies"] = std::move(ids);
    cfg.metadata = std::move(meta);
    return cfg;
}

json figure1_document() {
    return json{{"n", 2},
                {"m", 1},
                {"system", {{"A", {{1.0, 1.0}, {0.0, 1.0}}}, {"B", {{1.0}, {0.5}}}}},
                {"policies",
                 {{{"id", "K1"}, {"K", {{0.2, 0.4}}}},
                  {{"id", "K2"}, {"K", {{0.0, 1.0}}}},
                  {{"id", "K3"}, {"K", {{-0.02, 0.5}}}}}},
                {"costs", {{"Q", {{1.5, 0.0}, {0.0, 1.5}}}, {"R", {{1.0}}}}},
                {"disturbance", {{"recipe", "eigvec"}, {"W", 1.0}}},
                {"x0", {0.0, 0.0}},
                {"horizons", "1:100"}};
}

// ============================================================================
// Commands
// ============================================================================

std::vector<Artifact> cmd_simulate(const ExperimentConfig& cfg) {
    require_loop(cfg);
    std::vector<Artifact> out;
    for (const PolicySpec* p : selected(cfg)) {
        const DisturbanceSignal w = generator_for(cfg, *p)(cfg.T);
        const Trajectory        traj = simulate(*cfg.system, p->policy, cfg.x0, w, *cfg.costs, cfg.T);
        std::ostringstream      os;
        io::write_trajectory_csv(os, traj);
        out.push_back({"trajectory_" + p->id + ".csv", os.str()});
    }
    return out;
}

std::vector<Artifact> cmd_stability(const ExperimentConfig& cfg) {
    if (!cfg.system)
        throw ConfigError("/system", "missing");
    if (cfg.policies.empty())
        throw ConfigError("/policies", "at least one policy required");
    json doc;
    doc["metadata"] = cfg.metadata;
    doc["policies"] = json::object();
    for (const PolicySpec* p : selected(cfg)) {
        const MatrixSequence F = closed_loop_sequence(*cfg.system, p->policy, std::max<std::size_t>(cfg.T, 1));
        StabilityOptions opt = cfg.stability;
        StabilityReport report;
        if (F.is_constant()) {
            report = classify_lti(F.at(0), opt);
        } else {
            opt.horizon = std::min(opt.horizon, cfg.T);
            report = classify_ltv(F, cfg.T, opt);
        }
        doc["policies"][p->id] = io::to_json(report);
    }
    return {{"stability.json", dump(doc)}};
}

std::vector<Artifact> cmd_regret(const ExperimentConfig& cfg) {
    require_loop(cfg);
    std::vector<Artifact> out;
    json summary;
    summary["metadata"] = cfg.metadata;
    summary["policies"] = json::object();
    for (const PolicySpec* p : selected(cfg)) {
        CurveMetadata meta{cfg.X, cfg.recipe.W, p->id, disturbance_id(cfg)};
        const RegretCurve curve =
            regret_curve(*cfg.system, *cfg.costs, p->policy, cfg.x0, generator_for(cfg, *p), cfg.horizons, meta);
        std::ostringstream os;
        io::write_curve_csv(os, curve);
        out.push_back({"regret_" + p->id + ".csv", os.str()});

        json entry;
        entry["disturbance"] = curve.metadata.disturbance_id;
        entry["final_time_averaged"] = io::number(curve.time_averaged.back());
        entry["overflow"] = curve.any_overflow();
        try {
            const GrowthReadout g = growth_readout(curve, cfg.growth);
            entry["growth"] = to_string(g.growth);
            entry["slope"] = io::number(g.slope);
        } catch (const Error& e) {
            entry["growth"] = nullptr;
            entry["growth_note"] = e.what();
        }
        if (cfg.certificate)
            entry["certificate"] =
                io::to_json(theorem1_certificate(*cfg.system, *cfg.costs, p->policy, cfg.X, cfg.recipe.W,
                                                 cfg.certificate_options));
        summary["policies"][p->id] = std::move(entry);
    }
    out.push_back({"regret_summary.json", dump(summary)});
    return out;
}

std::vector<std::pair<std::string, RegretCurve>> figure1_curves(const ExperimentConfig& cfg) {
    require_loop(cfg);
    std::vector<std::pair<std::string, RegretCurve>> curves;
    for (const PolicySpec* p : selected(cfg)) {
        CurveMetadata meta{cfg.X, cfg.recipe.W, p->id, disturbance_id(cfg)};
        curves.emplace_back(p->id, regret_curve(*cfg.system, *cfg.costs, p->policy, cfg.x0, generator_for(cfg, *p),
                                                cfg.horizons, meta));
    }
    return curves;
}

std::vector<Artifact> cmd_figure1(const ExperimentConfig& cfg) {
    const auto curves = figure1_curves(cfg);
    std::vector<Artifact> out;
    std::vector<io::SvgSeries> series;
    json doc;
    doc["metadata"] = cfg.metadata;
    doc["curves"] = json::object();
    for (const auto& [id, curve] : curves) {
        std::ostringstream os;
        io::write_curve_csv(os, curve);
        out.push_back({"figure1_" + id + ".csv", os.str()});

        io::SvgSeries s;
        s.label = id;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            s.x.push_back(static_cast<double>(curve.horizons[i]));
            s.y.push_back(curve.time_averaged[i]);
        }
        series.push_back(std::move(s));

        json entry;
        entry["final_time_averaged"] = io::number(curve.time_averaged.back());
        entry["max_time_averaged"] =
            io::number(*std::max_element(curve.time_averaged.begin(), curve.time_averaged.end()));
        try {
            const GrowthReadout g = growth_readout(curve, cfg.growth);
            entry["growth"] = to_string(g.growth);
            entry["slope"] = io::number(g.slope);
        } catch (const Error& e) {
            entry["growth"] = nullptr;
            entry["growth_note"] = e.what();
        }
        const auto it = std::find_if(cfg.policies.begin(), cfg.policies.end(),
                                     [&, &cid = id](const PolicySpec& p) { return p.id == cid; });
        entry["stability"] = to_string(classify_lti(closed_loop_matrix(*cfg.system, it->policy, 0), cfg.stability)
                                           .classification);
        doc["curves"][id] = std::move(entry);
    }
    out.push_back({"figure1.svg", io::semilog_svg(series, "Time-averaged regret R_T/T", "horizon T", "R_T / T")});
    out.push_back({"figure1.json", dump(doc)});
    return out;
}

std::vector<Artifact> cmd_counterexample(const ExperimentConfig& cfg) {
    const auto& cx = cfg.counterexample;
    const auto  rows = gamma_scan(cx.A, cx.B, cx.Q, cx.R, cx.alpha_grid);

    std::ostringstream scan_csv;
    io::write_gamma_scan_csv(scan_csv, rows);
    std::vector<GammaScanRow> members;
    std::copy_if(rows.begin(), rows.end(), std::back_inserter(members), [](const GammaScanRow& r) { return r.in_gamma; });
    std::ostringstream gamma_csv;
    io::write_gamma_scan_csv(gamma_csv, members);

    json report;
    report["system"] = {{"A", io::to_json(cx.A)}, {"B", io::to_json(cx.B)}, {"Q", io::to_json(cx.Q)},
                        {"R", io::to_json(cx.R)}};
    json in_gamma = json::array();
    for (const auto& r : members)
        in_gamma.push_back(r.alpha);
    report["gamma"] = std::move(in_gamma);

    std::optional<double> alpha = cx.alpha;
    if (!alpha && !members.empty())
        alpha = members.front().alpha;
    if (alpha) {
        const auto model = DiscountedLqrModel::build(cx.A, cx.B, cx.Q, cx.R, *alpha);
        report["model"] = {{"alpha", *alpha},
                           {"P", io::to_json(model.P)},
                           {"K", io::to_json(model.K)},
                           {"F", io::to_json(model.F)},
                           {"rho", io::number(model.rho)},
                           {"alpha_norm", io::number(model.alpha_norm)},
                           {"in_gamma", model.in_gamma},
                           {"dare_residual", io::number(model.dare_residual)}};
        DiscountedBoundOptions opt;
        opt.seed = cx.seed;
        report["bound"] = io::to_json(linear_regret_despite_instability(model, cx.W, cx.X, cx.T_grid, opt));
    } else {
        report["model"] = nullptr;
        report["bound"] = nullptr;
    }
    return {{"gamma_scan.csv", scan_csv.str()},
            {"gamma_set.csv", gamma_csv.str()},
            {"counterexample_report.json", dump(report)}};
}

// ============================================================================
// Entry point
// ============================================================================

namespace {

void emit_error(std::ostream& err, const std::string& kind, const std::string& message, const std::string& path = {}) {
    json j{{"error", kind}, {"message", message}};
    if (!path.empty())
        j["path"] = path;
    err << j.dump() << "\n";
}

void write_artifacts(const std::vector<Artifact>& artifacts, const std::optional<std::string>& out_dir,
                     std::ostream& out) {
    if (!out_dir) {
        for (std::size_t i = 0; i < artifacts.size(); ++i) {
            if (artifacts.size() > 1)
                out << "==> " << artifacts[i].name << " <==\n";
            out << artifacts[i].content;
        }
        return;
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(*out_dir, ec);
    if (ec)
        throw ConfigError("--out", "cannot create directory '" + *out_dir + "': " + ec.message());
    for (const auto& a : artifacts) {
        const fs::path path = fs::path(*out_dir) / a.name;
        std::ofstream  f(path, std::ios::binary);
        f << a.content;
        if (!f)
            throw ConfigError("--out", "cannot write '" + path.string() + "'");
    }
}

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("--config", "cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Regret and stability of linear feedback loops"};
    app.require_subcommand(1);

    std::optional<std::string>   config_path;
    std::optional<std::string>   out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string>   horizons;
    std::optional<std::string>   recipe;
    std::optional<std::string>   policy;
    std::vector<std::string>     thresholds;
    bool                         certificate = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment config");
        sub->add_option("--out", out_dir, "output directory (default: standard output)");
        sub->add_option("--seed", seed, "seed for random disturbances");
        sub->add_option("--horizons", horizons, "horizon grid a:b[:step]");
        sub->add_option("--recipe", recipe, "disturbance recipe")->check(CLI::IsMember({"eigvec", "phi", "random"}));
        sub->add_option("--policy", policy, "restrict to one policy id");
        sub->add_option("--threshold", thresholds, "threshold override key=value (repeatable)");
    };
    auto* simulate_cmd = app.add_subcommand("simulate", "closed-loop trajectory CSV");
    auto* stability_cmd = app.add_subcommand("stability", "stability report JSON");
    auto* regret_cmd = app.add_subcommand("regret", "regret curves CSV and growth summary JSON");
    auto* figure1_cmd = app.add_subcommand("figure1", "time-averaged regret of the three fixed gains");
    auto* counter_cmd = app.add_subcommand("counterexample", "discounted LQR scan and bound report");
    for (auto* sub : {simulate_cmd, stability_cmd, regret_cmd, figure1_cmd, counter_cmd})
        add_common(sub);
    regret_cmd->add_flag("--certificate", certificate, "also check the linear-regret certificate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        emit_error(err, "config", e.what());
        return kExitConfig;
    }

    try {
        Overrides ov{seed, horizons, recipe, thresholds, certificate, policy};
        std::vector<Artifact> artifacts;
        if (figure1_cmd->parsed()) {
            const json doc = config_path ? load_json(*config_path) : figure1_document();
            artifacts = cmd_figure1(parse_config(doc, ov));
        } else if (counter_cmd->parsed()) {
            const json doc = config_path ? load_json(*config_path) : json::object();
            artifacts = cmd_counterexample(parse_config(doc, ov));
        } else {
            if (!config_path)
                throw ConfigError("--config", "required for this command");
            const ExperimentConfig cfg = parse_config(load_json(*config_path), ov);
            if (simulate_cmd->parsed())
                artifacts = cmd_simulate(cfg);
            else if (stability_cmd->parsed())
                artifacts = cmd_stability(cfg);
            else
                artifacts = cmd_regret(cfg);
        }
        write_artifacts(artifacts, out_dir, out);
        return kExitOk;
    } catch (const ConfigError& e) {
        emit_error(err, "config", e.what(), e.path());
        return kExitConfig;
    } catch (const ShapeError& e) {
        emit_error(err, "config", e.what());
        return kExitConfig;
    } catch (const AssumptionViolation& e) {
        emit_error(err, "config", e.what());
        return kExitConfig;
    } catch (const OverflowError& e) {
        emit_error(err, "numerical", e.what());
        return kExitNumerical;
    } catch (const Error& e) {
        emit_error(err, "numerical", e.what());
        return kExitNumerical;
    }
}

} // namespace regstab::cli
