// odbss command-line front end: subsample, design, bench, bench summarize.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "odbss/bench.hpp"
#include "odbss/errors.hpp"

namespace {

using json = nlohmann::json;
using namespace odbss;

json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json design_json(const Design& d) {
    json j;
    j["support"] = matrix_rows(d.support);
    j["weights"] = vector_json(d.weights);
    j["certified"] = d.certified;
    j["max_ratio"] = d.max_ratio;
    j["iterations"] = d.iterations;
    return j;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << std::setw(2) << j << '\n';
}

Vector parse_beta(const std::string& text) {
    std::vector<double> v;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
            throw InvalidArgument("--beta: bad number '" + item + "'");
        v.push_back(x);
    }
    return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct SubsampleArgs {
    std::string data, response, model, criterion = "A", metric = "frobenius", space = "auto", out;
    std::size_t k = 0;
    double k0_frac = 0.2, zeta = 0.95;
    std::uint64_t seed = 0;
    bool omit_timings = false;
};

int run_subsample(const SubsampleArgs& a) {
    const Dataset data = load_dataset_csv(a.data, a.response);
    ModelSpec model{parse_family(a.model), data.dim()};
    OdbssConfig cfg;
    cfg.k = a.k;
    cfg.k0_fraction = a.k0_frac;
    cfg.criterion = parse_criterion(a.criterion);
    cfg.metric = parse_metric(a.metric);
    cfg.zeta = a.zeta;
    cfg.space_mode = parse_space_mode(a.space);
    cfg.seed = a.seed;
    const SubsampleResult res = odbss_subsample(data, model, cfg);

    std::ofstream out(a.out);
    if (!out) throw InvalidArgument("cannot write " + a.out);
    for (Index i : res.indices) out << i << '\n';

    json side;
    side["model"] = family_name(model.family);
    side["k"] = a.k;
    side["k0"] = cfg.k0();
    side["criterion"] = criterion_name(cfg.criterion);
    side["metric"] = metric_name(cfg.metric);
    side["zeta"] = cfg.zeta;
    side["space"] = res.space ? space_source_name(*res.space) : "none";
    side["seed"] = a.seed;
    side["candidate_count"] = res.candidate_count;
    side["pilot_beta"] = vector_json(res.pilot_beta);
    side["initial_indices"] = res.initial_indices;
    side["design"] = design_json(res.design_used);
    if (!a.omit_timings)
        side["timings_ms"] = {{"stage1", res.timings.stage1_ms},
                              {"stage2", res.timings.stage2_ms},
                              {"stage3", res.timings.stage3_ms}};
    write_json(a.out + ".json", side);
    return 0;
}

struct DesignArgs {
    std::string candidates, model, beta, criterion = "A", out;
    double tol = 1e-4;
    std::size_t max_iter = 10000;
};

int run_design(const DesignArgs& a) {
    const CsvTable t = read_csv(a.candidates);
    ModelSpec model{parse_family(a.model), static_cast<std::size_t>(t.values.cols())};
    const Vector beta = parse_beta(a.beta);
    const Criterion crit = parse_criterion(a.criterion);
    DesignOptions opt;
    opt.tol = a.tol;
    opt.max_iter = a.max_iter;
    const Design d = optimize_design(t.values, model, beta, crit, opt);
    json j = design_json(d);
    j["criterion"] = criterion_name(crit);
    j["criterion_value"] = criterion_value(info_matrix(d, model, beta), crit);
    j["candidates"] = t.values.rows();
    j["source_rows"] = d.source;
    write_json(a.out, j);
    if (!d.certified) std::cerr << "warning: design not certified (max ratio " << d.max_ratio << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal-design-based subsampling"};
    app.require_subcommand(1);

    SubsampleArgs sa;
    auto* sub = app.add_subcommand("subsample", "Select a k-row subsample from a CSV dataset");
    sub->add_option("--data", sa.data, "Input CSV with header")->required();
    sub->add_option("--response", sa.response, "Response column name")->required();
    sub->add_option("--model", sa.model, "logistic | logistic-no-intercept | linear | hetero")->required();
    sub->add_option("--k", sa.k, "Subsample size")->required();
    sub->add_option("--k0-frac", sa.k0_frac, "Pilot fraction of k")->capture_default_str();
    sub->add_option("--criterion", sa.criterion, "A | D | E")->capture_default_str();
    sub->add_option("--metric", sa.metric, "frobenius | sqrt | procrustes")->capture_default_str();
    sub->add_option("--zeta", sa.zeta, "Efficiency threshold for support reduction")->capture_default_str();
    sub->add_option("--space", sa.space, "grid | mh | full | auto")->capture_default_str();
    sub->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", sa.out, "Output index file (sidecar written to <out>.json)")->required();
    sub->add_flag("--omit-timings", sa.omit_timings, "Leave wall-clock timings out of the sidecar");

    DesignArgs da;
    auto* des = app.add_subcommand("design", "Optimal design on a finite candidate set");
    des->add_option("--candidates", da.candidates, "Candidate CSV with header")->required();
    des->add_option("--model", da.model, "Model family")->required();
    des->add_option("--beta", da.beta, "Comma-separated parameter vector")->required();
    des->add_option("--criterion", da.criterion, "A | D | E | numeric q < 1")->capture_default_str();
    des->add_option("--tol", da.tol, "Equivalence-theorem tolerance")->capture_default_str();
    des->add_option("--max-iter", da.max_iter, "Iteration budget")->capture_default_str();
    des->add_option("--out", da.out, "Output JSON")->required();

    std::string config_path, bench_out, sum_in, sum_out;
    auto* bench = app.add_subcommand("bench", "Run a simulation experiment");
    bench->add_option("--config", config_path, "Experiment JSON");
    bench->add_option("--out", bench_out, "Result CSV");
    auto* summ = bench->add_subcommand("summarize", "Aggregate a result CSV");
    summ->add_option("--in", sum_in, "Result CSV")->required();
    summ->add_option("--out", sum_out, "Summary CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sub) return run_subsample(sa);
        if (*des) return run_design(da);
        if (*summ) {
            write_summary_csv(sum_out, summarize(read_results_csv(sum_in)));
            return 0;
        }
        if (*bench) {
            if (config_path.empty() || bench_out.empty()) {
                std::cerr << "bench: --config and --out are required\n";
                return 2;
            }
            const auto rows = run_experiment(load_experiment_config(config_path));
            write_results_csv(bench_out, rows);
            return 0;
        }
    } catch (const odbss::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
