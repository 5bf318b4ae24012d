#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "odbss/bench.hpp"
#include "odbss/errors.hpp"
#include "odbss/rng.hpp"

namespace odbss {

namespace {

using json = nlohmann::json;

const std::vector<std::string> kMethodNames = {"odbss", "odbss2", "uniform", "iboss", "osmac-mvc", "osmac-mmse", "full"};

double to_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("bad number for " + what + ": '" + s + "'");
    return v;
}

std::size_t to_size(const std::string& s, const std::string& what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("bad integer for " + what + ": '" + s + "'");
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' || c == '\r' ? ' ' : c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
}

Vector json_vector(const json& j, std::size_t len, const std::string& what) {
    if (j.is_number()) return Vector::Constant(static_cast<Eigen::Index>(len), j.get<double>());
    if (!j.is_array()) throw InvalidArgument("config: " + what + " must be a number or an array");
    std::vector<double> v = j.get<std::vector<double>>();
    if (v.size() != len) throw InvalidArgument("config: " + what + " must have " + std::to_string(len) + " entries");
    return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw InvalidArgument("config: unknown key '" + key + "' in " + where);
}

Scenario parse_scenario(const json& j, std::size_t index) {
    check_keys(j, {"id", "family", "p", "beta", "n", "law", "kappa", "alpha", "sigma", "mu", "mu2", "seed"},
               "scenario");
    Scenario s;
    s.id = j.value("id", "s" + std::to_string(index));
    s.model.family = parse_family(j.value("family", std::string("logistic-no-intercept")));
    s.model.p = j.at("p").get<std::size_t>();
    s.beta = json_vector(j.at("beta"), s.model.dim_beta(), "beta");
    s.n = j.value("n", std::size_t{100000});
    s.law = parse_law(j.value("law", std::string("normal")));
    s.kappa = j.value("kappa", 3.0);
    if (j.contains("alpha")) s.alpha = json_vector(j["alpha"], s.model.p, "alpha");
    if (j.contains("sigma")) {
        const json& sg = j["sigma"];
        if (sg.is_string()) {
            s.sigma = parse_sigma_kind(sg.get<std::string>());
        } else {
            auto rows = sg.get<std::vector<std::vector<double>>>();
            const auto pe = static_cast<Eigen::Index>(s.model.p);
            if (static_cast<Eigen::Index>(rows.size()) != pe)
                throw InvalidArgument("config: custom sigma must be p x p");
            s.sigma = SigmaKind::Custom;
            s.custom_sigma.resize(pe, pe);
            for (Eigen::Index i = 0; i < pe; ++i) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != pe)
                    throw InvalidArgument("config: custom sigma must be p x p");
                for (Eigen::Index c = 0; c < pe; ++c) s.custom_sigma(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            }
        }
    }
    if (j.contains("mu")) s.mu = json_vector(j["mu"], s.model.p, "mu");
    if (j.contains("mu2")) s.mu2 = json_vector(j["mu2"], s.model.p, "mu2");
    s.seed = j.value("seed", static_cast<std::uint64_t>(index));
    s.validate();
    return s;
}

}  // namespace

MethodSpec parse_method(const std::string& text) {
    MethodSpec m;
    m.label = text;
    const auto open = text.find('[');
    m.name = text.substr(0, open);
    if (std::find(kMethodNames.begin(), kMethodNames.end(), m.name) == kMethodNames.end())
        throw InvalidArgument("unknown method '" + m.name + "'");
    if (m.name == "odbss2") m.odbss.space_mode = SpaceMode::FullSample;
    if (open == std::string::npos) return m;
    if (text.back() != ']') throw InvalidArgument("method options must end with ']': " + text);
    std::istringstream opts(text.substr(open + 1, text.size() - open - 2));
    std::string item;
    while (std::getline(opts, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw InvalidArgument("method option needs key=value: " + item);
        const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
        if (key == "metric") m.odbss.metric = parse_metric(val);
        else if (key == "zeta") m.odbss.zeta = to_double(val, key);
        else if (key == "criterion") m.odbss.criterion = parse_criterion(val);
        else if (key == "space") m.odbss.space_mode = parse_space_mode(val);
        else if (key == "k0") m.odbss.k0_fraction = to_double(val, key);
        else if (key == "L") m.odbss.grid_partitions = to_size(val, key);
        else if (key == "eps") m.odbss.epsilon = to_double(val, key);
        else throw InvalidArgument("unknown method option '" + key + "'");
    }
    return m;
}

MethodOutcome run_method(const MethodSpec& method, const Dataset& data, const ModelSpec& model, std::size_t k,
                         std::uint64_t seed) {
    MethodOutcome out;
    const std::string& name = method.name;
    if (name == "odbss" || name == "odbss2") {
        OdbssConfig cfg = method.odbss;
        cfg.k = k;
        cfg.seed = seed;
        out.sample = odbss_subsample(data, model, cfg);
    } else if (name == "uniform") {
        out.sample.indices = uniform_subsample(data.rows(), k, seed);
    } else if (name == "iboss") {
        out.sample = iboss_subsample(data, model, k, seed);
    } else if (name == "osmac-mvc" || name == "osmac-mmse") {
        const auto k0 = static_cast<std::size_t>(std::llround(method.odbss.k0_fraction * static_cast<double>(k)));
        out.sample = osmac_subsample(data, model, k, k0, name == "osmac-mvc" ? OsmacVariant::MVc : OsmacVariant::MMSE,
                                     seed);
    } else if (name == "full") {
        out.sample.indices.resize(data.rows());
        std::iota(out.sample.indices.begin(), out.sample.indices.end(), Index{0});
    } else {
        throw InvalidArgument("unknown method '" + name + "'");
    }
    const Dataset sub = name == "full" ? data : data.subset(out.sample.indices);
    const ParamEstimate est = fit_mle(model, sub, out.sample.estimation_weights);
    out.beta_hat = est.beta;
    out.converged = est.converged;
    return out;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
    if (config.scenarios.empty() || config.methods.empty() || config.k_grid.empty())
        throw InvalidArgument("run_experiment: scenarios, methods and k grid must be nonempty");
    std::vector<MethodSpec> methods;
    for (const auto& m : config.methods) methods.push_back(parse_method(m));
    for (const auto& s : config.scenarios) s.validate();

    struct Job {
        std::size_t scenario, rep;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < config.scenarios.size(); ++s)
        for (std::size_t r = 0; r < config.replicates; ++r) jobs.push_back({s, r});
    std::vector<std::vector<ResultRow>> results(jobs.size());

    auto run_job = [&](std::size_t j) {
        const Scenario& sc = config.scenarios[jobs[j].scenario];
        const std::size_t rep = jobs[j].rep;
        std::vector<ResultRow>& rows = results[j];
        Dataset data;
        std::string data_error;
        try {
            data = replicate_data(sc, config.seed, rep);
        } catch (const std::exception& e) {
            data_error = std::string("data: ") + e.what();
        }
        std::optional<MethodOutcome> full;
        for (const MethodSpec& m : methods)
            for (std::size_t k : config.k_grid) {
                ResultRow row;
                row.scenario = sc.id;
                row.method = m.label;
                row.k = k;
                row.rep = rep;
                row.mse = std::numeric_limits<double>::quiet_NaN();
                try {
                    if (!data_error.empty()) throw Error(data_error);
                    const std::uint64_t seed =
                        derive_seed(config.seed, {sc.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(k), 7});
                    MethodOutcome local;
                    const MethodOutcome* o = &local;
                    if (m.name == "full") {
                        if (!full) full = run_method(m, data, sc.model, k, seed);
                        o = &*full;
                    } else {
                        local = run_method(m, data, sc.model, k, seed);
                    }
                    row.mse = (o->beta_hat - sc.beta).squaredNorm();
                    row.support_count = o->sample.design_used.size();
                    if (config.record_timings) {
                        row.t_stage1_ms = o->sample.timings.stage1_ms;
                        row.t_stage2_ms = o->sample.timings.stage2_ms;
                        row.t_stage3_ms = o->sample.timings.stage3_ms;
                    }
                    if (!o->converged) row.error = "mle-not-converged";
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }
    };

    std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, jobs.size());
    if (threads <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) run_job(j);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<ResultRow> all;
    for (auto& r : results) all.insert(all.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    return all;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "scenario,method,k,rep,mse,support_count,t_stage1_ms,t_stage2_ms,t_stage3_ms,error\n";
    for (const auto& r : rows)
        out << csv_field(r.scenario) << ',' << csv_field(r.method) << ',' << r.k << ',' << r.rep << ',' << fmt(r.mse)
            << ',' << r.support_count << ',' << fmt(r.t_stage1_ms) << ',' << fmt(r.t_stage2_ms) << ','
            << fmt(r.t_stage3_ms) << ',' << csv_field(r.error) << '\n';
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    write_results_csv(out, rows);
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("results csv: empty file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expect = {"scenario", "method", "k", "rep", "mse", "support_count",
                                             "t_stage1_ms", "t_stage2_ms", "t_stage3_ms", "error"};
    if (header != expect) throw InvalidArgument("results csv: unexpected header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto c = split_csv_line(line);
        if (c.size() != expect.size())
            throw InvalidArgument("results csv: line " + std::to_string(line_no) + " has the wrong number of cells");
        ResultRow r;
        r.scenario = c[0];
        r.method = c[1];
        r.k = to_size(c[2], "k");
        r.rep = to_size(c[3], "rep");
        r.mse = to_double(c[4], "mse");
        r.support_count = to_size(c[5], "support_count");
        r.t_stage1_ms = to_double(c[6], "t_stage1_ms");
        r.t_stage2_ms = to_double(c[7], "t_stage2_ms");
        r.t_stage3_ms = to_double(c[8], "t_stage3_ms");
        r.error = c[9];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw InvalidArgument("summarize: empty result table");
    std::vector<SummaryRow> out;
    std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> slot;
    std::vector<std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.scenario, r.method, r.k);
        auto it = slot.find(key);
        if (it == slot.end()) {
            it = slot.emplace(key, out.size()).first;
            SummaryRow s;
            s.scenario = r.scenario;
            s.method = r.method;
            s.k = r.k;
            out.push_back(s);
            groups.emplace_back();
        }
        groups[it->second].push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        SummaryRow& s = out[g];
        std::vector<const ResultRow*> ok;
        for (const ResultRow* r : groups[g]) {
            // Non-converged fits still carry a valid estimate.
            if ((r->error.empty() || r->error == "mle-not-converged") && std::isfinite(r->mse)) ok.push_back(r);
            else ++s.failures;
        }
        s.replicates = ok.size();
        if (ok.empty()) {
            s.mse_mean = s.mse_se = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double m = static_cast<double>(ok.size());
        for (const ResultRow* r : ok) {
            s.mse_mean += r->mse / m;
            s.support_mean += static_cast<double>(r->support_count) / m;
            s.t_stage1_ms += r->t_stage1_ms / m;
            s.t_stage2_ms += r->t_stage2_ms / m;
            s.t_stage3_ms += r->t_stage3_ms / m;
        }
        if (ok.size() > 1) {
            double ss = 0.0;
            for (const ResultRow* r : ok) ss += (r->mse - s.mse_mean) * (r->mse - s.mse_mean);
            s.mse_se = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
        }
    }
    return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << "scenario,method,k,replicates,mse_mean,mse_se,support_mean,t_stage1_ms,t_stage2_ms,t_stage3_ms,failures\n";
    for (const auto& s : rows)
        out << csv_field(s.scenario) << ',' << csv_field(s.method) << ',' << s.k << ',' << s.replicates << ','
            << fmt(s.mse_mean) << ',' << fmt(s.mse_se) << ',' << fmt(s.support_mean) << ',' << fmt(s.t_stage1_ms)
            << ',' << fmt(s.t_stage2_ms) << ',' << fmt(s.t_stage3_ms) << ',' << s.failures << '\n';
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    try {
        check_keys(j, {"scenarios", "methods", "k_grid", "replicates", "seed", "threads", "record_timings"}, "config");
        ExperimentConfig c;
        std::size_t i = 0;
        for (const auto& s : j.at("scenarios")) c.scenarios.push_back(parse_scenario(s, i++));
        c.methods = j.at("methods").get<std::vector<std::string>>();
        for (const auto& m : c.methods) parse_method(m);
        c.k_grid = j.at("k_grid").get<std::vector<std::size_t>>();
        c.replicates = j.value("replicates", std::size_t{100});
        c.seed = j.value("seed", std::uint64_t{0});
        c.threads = j.value("threads", std::size_t{0});
        c.record_timings = j.value("record_timings", true);
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

}  // namespace odbss
