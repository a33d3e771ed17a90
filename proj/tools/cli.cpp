#include "cli.hpp"

#include "ipwsel/errors.hpp"
#include "ipwsel/io.hpp"
#include "ipwsel/simulation.hpp"
#include "ipwsel/variance.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace ipwsel::cli {

namespace {

struct Options {
    std::string method;
    std::string data, external_data, summary, roles;
    std::vector<double> winsorize;
    bool augment_outcome = false;
    std::vector<std::string> coarsen;
    std::string out;
    std::string format = "csv";

    // simulate
    std::string config;
    std::optional<int> dag, setup, replications, threads;
    std::optional<long> population_size;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> methods;
    std::string export_population;
};

OutputFormat format_of(const Options& o) {
    const auto f = parse_format(o.format);
    if (!f) fail(ErrorKind::ConfigError, "--format must be csv or json");
    return *f;
}

void emit(const Options& o, const std::string& text, std::ostream& out) {
    if (o.out.empty()) {
        out << text;
    } else {
        write_file(o.out, text);
    }
}

// Selection design without the outcome column, for the outcome models used
// by --augment-outcome.
DesignMatrix drop_outcome(const DesignMatrix& x) {
    DesignMatrix r;
    r.has_intercept = x.has_intercept;
    const Eigen::Index p = x.p();
    r.rows.resize(x.n(), p - 1);
    r.rows.col(0) = x.rows.col(0);
    if (p > 2) r.rows.rightCols(p - 2) = x.rows.rightCols(p - 2);
    r.column_names.push_back(x.column_names[0]);
    r.column_names.insert(r.column_names.end(), x.column_names.begin() + 2, x.column_names.end());
    return r;
}

std::map<std::string, CoarseningRule> coarsening_rules(const std::vector<std::string>& specs) {
    std::map<std::string, CoarseningRule> rules;
    for (const std::string& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) fail(ErrorKind::ConfigError, "--coarsen expects VAR=c1,c2,...");
        CoarseningRule r;
        r.variable = s.substr(0, eq);
        std::stringstream ss(s.substr(eq + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                r.cutoffs.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::logic_error&) {
                fail(ErrorKind::ConfigError, "--coarsen: '" + item + "' is not a number");
            }
        }
        if (r.cutoffs.empty() || !std::is_sorted(r.cutoffs.begin(), r.cutoffs.end())) {
            fail(ErrorKind::ConfigError, "--coarsen: cutoffs for " + r.variable + " must be non-empty and sorted");
        }
        if (!rules.emplace(r.variable, r).second) fail(ErrorKind::ConfigError, "--coarsen: " + r.variable + " given twice");
    }
    return rules;
}

struct Analysis {
    AnalysisSample sample;
    WeightSet weights;
    Vector theta;
    Matrix vcov;
};

Analysis analyze(const Options& o) {
    const auto method = parse_method(o.method);
    if (!method || *method == Method::oracle) {
        fail(ErrorKind::ConfigError, "--method must be one of unweighted, pl, sr, ps, cl");
    }
    if (o.data.empty()) fail(ErrorKind::ConfigError, "--data is required");
    if (o.roles.empty()) fail(ErrorKind::ConfigError, "--roles is required");
    if (!o.winsorize.empty() && o.winsorize.size() != 2) fail(ErrorKind::ConfigError, "--winsorize takes two quantiles");

    const ColumnRoleMap roles = load_roles(o.roles);
    const CsvTable table = read_csv(o.data);
    Analysis a;
    a.sample = internal_sample(table, roles);
    const AnalysisSample& s = a.sample;
    const double n = static_cast<double>(s.outcome.size());

    const bool needs_external = *method == Method::PL || *method == Method::SR || o.augment_outcome;
    std::optional<ExternalSample> ext;
    if (needs_external) {
        if (o.external_data.empty()) fail(ErrorKind::ConfigError, "--external-data is required for this method");
        ext = external_sample(o.external_data == o.data ? table : read_csv(o.external_data), roles);
    }
    std::vector<OverlapPair> overlap;
    if (ext && !s.ids.empty()) overlap = match_overlap(s.ids, ext->ids);

    std::optional<PopulationSummary> summary;
    double big_n = n;
    switch (*method) {
        case Method::unweighted:
            a.weights = known_weights(Vector::Ones(s.outcome.size()));
            break;
        case Method::PL:
            a.weights = estimate_weights_pl(s.selection, ext->selection, ext->pi_ext);
            big_n = ext->pi_ext.cwiseInverse().sum();
            break;
        case Method::SR:
            if (s.ids.empty()) fail(ErrorKind::ConfigError, "sr needs an id role to label the overlap");
            a.weights = estimate_weights_sr(s.selection, ext->selection, ext->pi_ext, overlap);
            big_n = ext->pi_ext.cwiseInverse().sum();
            break;
        case Method::PS: {
            if (o.summary.empty()) fail(ErrorKind::ConfigError, "--summary is required for ps");
            summary = load_population_summary(o.summary, PopulationSummary::Kind::joint_cells);
            const auto rules = coarsening_rules(o.coarsen);
            std::vector<std::vector<long>> keys(s.rows.size());
            for (const std::string& var : summary->variables) {
                const std::vector<double> v = numeric_column(table, var, s.rows);
                std::vector<long> labels;
                if (const auto it = rules.find(var); it != rules.end()) {
                    labels = coarsen(v, it->second);
                } else {
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        if (v[i] != std::floor(v[i])) {
                            fail(ErrorKind::NonNumericCell, "row " + std::to_string(s.rows[i] + 1) + ", column '" + var +
                                                                "': not an integer level (use --coarsen)");
                        }
                        labels.push_back(static_cast<long>(v[i]));
                    }
                }
                for (std::size_t i = 0; i < labels.size(); ++i) keys[i].push_back(labels[i]);
            }
            a.weights = estimate_weights_ps(keys, *summary);
            big_n = *summary->N;
            break;
        }
        case Method::CL:
            if (o.summary.empty()) fail(ErrorKind::ConfigError, "--summary is required for cl");
            summary = load_population_summary(o.summary, PopulationSummary::Kind::marginal_means);
            a.weights = estimate_weights_cl(s.selection, *summary);
            big_n = *summary->N;
            break;
        case Method::oracle:
            break;
    }

    const bool post = o.augment_outcome || !o.winsorize.empty();
    if (post) {
        Vector w = a.weights.pi_hat.cwiseInverse();
        if (o.augment_outcome) {
            const DesignMatrix xi = drop_outcome(s.selection);
            const DesignMatrix xe = drop_outcome(ext->selection);
            const Vector d_ext = ext->selection.rows.col(1);
            const FittedModel m_int = fit_logistic_weighted_by(xi, s.outcome, Vector::Ones(s.outcome.size()), {});
            const FittedModel m_pop = fit_logistic_weighted_by(xe, d_ext, ext->pi_ext.cwiseInverse(), {});
            w = augment_weights_with_outcome(w, s.outcome, expit(xi.rows * m_pop.coefficients),
                                             expit(xi.rows * m_int.coefficients));
        }
        if (!o.winsorize.empty()) w = winsorize_weights(w, o.winsorize[0], o.winsorize[1]);
        a.weights.pi_hat = w.cwiseInverse();
        // Only the relative weights matter for the fit and the plug-in
        // variance, so probabilities above 1 are scaled back into (0,1].
        const double top = a.weights.pi_hat.maxCoeff();
        if (top > 1.0) {
            a.weights.pi_hat /= top;
            a.weights.diagnostics["rescaled_by"] = 1.0 / top;
        }
    }

    const FittedModel fm = fit_weighted_logistic(s.disease, s.outcome, a.weights.pi_hat);
    a.theta = fm.coefficients;
    if (*method == Method::PL && !post) {
        const PlVarianceData data{s.disease.rows, s.outcome, s.selection.rows, ext->selection.rows, ext->pi_ext, overlap};
        a.vcov = vcov_pl(a.theta, *a.weights.alpha_hat, data, big_n);
    } else if (*method == Method::CL && !post) {
        a.vcov = vcov_cl(a.theta, *a.weights.alpha_hat, s.disease.rows, s.outcome, s.selection.rows, big_n);
    } else {
        a.vcov = vcov_known_weights(a.theta, s.disease.rows, s.outcome, a.weights.pi_hat, big_n);
    }
    return a;
}

void cmd_fit(const Options& o, std::ostream& out) {
    const OutputFormat fmt = format_of(o);
    const Analysis a = analyze(o);
    const auto ci = wald_ci(a.theta, a.vcov);
    std::vector<FitRow> rows;
    for (Eigen::Index j = 0; j < a.theta.size(); ++j) {
        rows.push_back({o.method, a.sample.disease.column_names[static_cast<std::size_t>(j)], a.theta[j],
                        std::sqrt(a.vcov(j, j)), ci[static_cast<std::size_t>(j)].first,
                        ci[static_cast<std::size_t>(j)].second});
    }
    std::ostringstream ss;
    write_records(ss, fit_table(rows), fmt);
    emit(o, ss.str(), out);
}

void cmd_weights(const Options& o, std::ostream& out) {
    const OutputFormat fmt = format_of(o);
    const Analysis a = analyze(o);
    std::ostringstream ss;
    write_records(ss, weights_table(a.weights, a.sample.ids), fmt);
    emit(o, ss.str(), out);
}

void cmd_simulate(const Options& o, std::ostream& out) {
    const OutputFormat fmt = format_of(o);
    SimulationConfig cfg;
    if (!o.config.empty()) {
        if (o.dag || o.setup) fail(ErrorKind::ConfigError, "--dag/--setup cannot be combined with --config");
        cfg = load_simulation_config(o.config);
    } else {
        cfg = SimulationConfig::standard(o.dag.value_or(1), o.setup.value_or(1));
    }
    if (o.replications) cfg.R = *o.replications;
    if (o.seed) cfg.seed = *o.seed;
    if (o.population_size) cfg.N = *o.population_size;
    cfg.validate();

    if (!o.export_population.empty()) {
        std::ostringstream ss;
        write_population(ss, generate_population(cfg, 0));
        write_file(o.export_population, ss.str());
        return;
    }

    std::vector<Method> methods;
    const std::vector<std::string> names =
        o.methods.empty() ? std::vector<std::string>{"unweighted", "pl", "sr", "ps", "cl"} : o.methods;
    for (const std::string& n : names) {
        const auto m = parse_method(n);
        if (!m) fail(ErrorKind::ConfigError, "--method: unknown method '" + n + "'");
        if (std::find(methods.begin(), methods.end(), *m) == methods.end()) methods.push_back(*m);
    }
    const int threads = o.threads.value_or(1);
    if (threads < 1) fail(ErrorKind::ConfigError, "--threads must be at least 1");
    const StudyResult study = run_study(cfg, methods, threads);
    std::ostringstream ss;
    write_records(ss, study_table(study), fmt);
    emit(o, ss.str(), out);
}

void add_data_options(CLI::App* sub, Options& o) {
    sub->add_option("--method", o.method, "unweighted, pl, sr, ps or cl")->required();
    sub->add_option("--data", o.data, "internal sample (CSV with header)")->required();
    sub->add_option("--roles", o.roles, "column role file (key=value)")->required();
    sub->add_option("--external-data", o.external_data, "external probability sample (CSV)");
    sub->add_option("--summary", o.summary, "population summary: joint cells (ps) or marginal means (cl)");
    sub->add_option("--coarsen", o.coarsen, "VAR=c1,c2 cutoffs used to match summary cells (repeatable)");
    sub->add_option("--winsorize", o.winsorize, "lower and upper weight quantiles")->expected(2);
    sub->add_flag("--augment-outcome", o.augment_outcome, "multiply weights by the outcome-model ratio");
    sub->add_option("--out", o.out, "output file (default stdout)");
    sub->add_option("--format", o.format, "csv or json");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Selection-bias corrected logistic regression"};
    app.name(args.empty() ? "ipwsel" : args[0]);
    app.require_subcommand(1);
    CLI::App* fit = app.add_subcommand("fit", "fit the disease model with estimated weights");
    CLI::App* weights = app.add_subcommand("weights", "estimate selection probabilities");
    CLI::App* sim = app.add_subcommand("simulate", "run the Monte Carlo study");
    add_data_options(fit, o);
    add_data_options(weights, o);

    sim->add_option("--config", o.config, "simulation config file (key=value)");
    sim->add_option("--dag", o.dag, "DAG 1-4");
    sim->add_option("--setup", o.setup, "setup 1-3");
    sim->add_option("--replications", o.replications, "number of replications");
    sim->add_option("--seed", o.seed, "random seed");
    sim->add_option("--threads", o.threads, "worker threads");
    sim->add_option("--population-size", o.population_size, "override N");
    sim->add_option("--method", o.methods, "methods to run (repeatable or comma-separated)")->delimiter(',');
    sim->add_option("--export-population", o.export_population, "write replication 0's population and exit");
    sim->add_option("--out", o.out, "output file (default stdout)");
    sim->add_option("--format", o.format, "csv or json");

    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: kind=UsageError message=" << e.what() << '\n';
        return 2;
    }

    try {
        if (fit->parsed()) cmd_fit(o, out);
        else if (weights->parsed()) cmd_weights(o, out);
        else cmd_simulate(o, out);
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: kind=" << to_string(e.kind()) << " message=" << msg << '\n';
        return is_convergence_failure(e.kind()) ? 3 : 2;
    } catch (const std::exception& e) {
        err << "error: kind=InternalError message=" << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace ipwsel::cli
