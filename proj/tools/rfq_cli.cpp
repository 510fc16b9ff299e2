#include <CLI11.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <rfq/densities.hpp>
#include <rfq/errors.hpp>
#include <rfq/features.hpp>
#include <rfq/kae.hpp>
#include <rfq/kae_json.hpp>
#include <rfq/learn.hpp>
#include <rfq/quantizer.hpp>
#include <rfq/quantizer_json.hpp>
#include <rfq/rng.hpp>
#include <rfq/sketch.hpp>
#include <rfq/theory.hpp>

// Command-line front end. Exit codes: 0 ok, 2 flag misuse, 3 a verification
// sweep had failing rows, 4 unreadable or malformed data. Output files are
// byte-stable for identical flags apart from the leading timestamp comment,
// which --no-timestamp removes.

namespace {

struct verify_failed {};  // carries exit code 3 out of the parse callback

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string timestamp_line(bool enabled) {
    if (!enabled) return {};
    const std::time_t now = std::time(nullptr);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return std::string("# generated ") + buf + "\n";
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw rfq::corrupt_error("cannot open " + path + " for writing");
    out << body;
    out.flush();
    if (!out) throw rfq::corrupt_error("write failed for " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw rfq::corrupt_error("cannot open " + path);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return body;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    const std::string body = read_text(path);
    return {body.begin(), body.end()};
}

rfq::Quantizer load_quantizer_file(const std::string& path) {
    const std::string text = read_text(path);
    try {
        return rfq::quantizer_parse(text);
    } catch (const std::invalid_argument& e) {
        throw rfq::corrupt_error("quantizer file " + path + ": " + e.what());
    }
}

// "64x8" -> rows x columns
std::pair<std::uint64_t, std::uint32_t> parse_shape(const std::string& text) {
    const std::size_t x = text.find('x');
    std::size_t used1 = 0, used2 = 0;
    std::uint64_t n = 0, d = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument("");
        n = std::stoull(text.substr(0, x), &used1);
        d = std::stoull(text.substr(x + 1), &used2);
    } catch (const std::exception&) {
        throw std::invalid_argument("expected ROWSxCOLS, e.g. 64x8, got '" + text + "'");
    }
    if (used1 != x || used2 != text.size() - x - 1 || n < 1 || d < 1 || d > (1u << 20))
        throw std::invalid_argument("expected ROWSxCOLS, e.g. 64x8, got '" + text + "'");
    return {n, static_cast<std::uint32_t>(d)};
}

Eigen::MatrixXd synthetic_unit_rows(std::uint64_t n, std::uint32_t d, std::uint64_t seed) {
    rfq::Stream s(rfq::derive(seed, rfq::stream_tag::kTrain));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = s.next_normal();
    return rfq::normalize_rows(x);
}

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Common per-command switches. Threads bound worker parallelism (the dense
// math is delegated to Eigen); the config file is flat key=value text whose
// values plain flags override.
struct CommonOpts {
    int threads = default_threads();
    bool no_timestamp = false;
    std::uint64_t seed = 0;
    std::string config;
};

void add_common(CLI::App* cmd, CommonOpts& c, bool with_seed = true) {
    cmd->add_option("--threads", c.threads, "worker thread cap")
        ->envname("RFFQ_THREADS")
        ->check(CLI::Range(1, 4096));
    cmd->add_flag("--no-timestamp", c.no_timestamp, "omit the generated-at comment");
    if (with_seed) cmd->add_option("--seed", c.seed, "root seed for all randomness");
    cmd->add_option("--config", c.config, "flat key=value option file; flags win");
}

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Expand a key=value file into --key=value tokens, skipping keys the command
// line already carries so explicit flags override the file.
std::vector<std::string> flat_config_args(const std::string& path,
                                          const std::vector<std::string>& given) {
    std::ifstream in(path);
    if (!in) throw rfq::corrupt_error("cannot open config " + path);
    const auto present = [&](const std::string& key) {
        const std::string full = "--" + key;
        for (const auto& a : given)
            if (a == full || a.rfind(full + "=", 0) == 0) return true;
        return false;
    };
    std::vector<std::string> extra;
    std::string line;
    while (std::getline(in, line)) {
        const std::string text = trimmed(line);
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("config " + path + ": expected key=value, got '" +
                                        text + "'");
        const std::string key = trimmed(text.substr(0, eq));
        if (!present(key)) extra.push_back("--" + key + "=" + trimmed(text.substr(eq + 1)));
    }
    return extra;
}

// The config option expands before parsing; values become ordinary argv
// tokens, so unknown keys fail like misspelled flags.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        else continue;
        const auto extra = flat_config_args(path, args);
        args.insert(args.end(), extra.begin(), extra.end());
        break;
    }
    return args;
}

void apply_threads(const CommonOpts& c) { Eigen::setNbThreads(c.threads); }

// ---------------------------------------------------------------- verify --

struct VerifyRow {
    std::string point;
    double theoretical;
    double empirical;
    double stderr_col;
    bool pass;
};

struct VerifyOpts {
    CommonOpts common;
    std::string theorem;
    std::string kind = "lm";
    int bits = 1;
    std::vector<double> gammas;
    std::vector<double> rhos;
    double gamma = 1.0;
    std::uint32_t m = 256;
    std::uint32_t reps = 2000;
    std::uint64_t samples = 200000;
    double sigma = 4.0;
    std::string out;
};

std::vector<double> default_rho_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(0.05 * i);
    return g;
}

rfq::Quantizer verify_quantizer(const VerifyOpts& o) {
    if (o.bits < 1 || o.bits > 8)
        throw std::invalid_argument("verify: --bits must be in 1..8");
    return rfq::build_quantizer(rfq::kind_from_name(o.kind), o.bits);
}

std::vector<VerifyRow> verify_marginal(const VerifyOpts& o) {
    std::vector<double> gammas = o.gammas.empty()
        ? std::vector<double>{0.5, 1.0, 5.0} : o.gammas;
    std::vector<VerifyRow> rows;
    std::vector<double> z(o.samples);
    for (const double g : gammas) {
        rfq::Stream s(rfq::derive(o.common.seed, rfq::stream_tag::kMc));
        for (auto& v : z) v = std::cos(g * s.next_normal() + s.next_angle());
        std::sort(z.begin(), z.end());
        double ks = 0.0;
        const double n = static_cast<double>(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double cdf = 0.5 + std::asin(std::clamp(z[i], -1.0, 1.0)) / rfq::kPi;
            ks = std::max(ks, std::abs(cdf - static_cast<double>(i + 1) / n));
            ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
        }
        const double threshold = 1.63 / std::sqrt(n);  // one-percent ks critical value
        rows.push_back({"gamma=" + fmt(g), 0.0, ks, threshold, ks < threshold});
    }
    return rows;
}

std::vector<VerifyRow> verify_stocq_variance(const VerifyOpts& o) {
    const rfq::Quantizer q = rfq::stocq_grid(o.bits);
    const auto gammas = o.gammas.empty() ? std::vector<double>{0.5, 1.0, 2.0} : o.gammas;
    const auto rhos = o.rhos.empty() ? std::vector<double>{0.0, 0.5, 0.9} : o.rhos;
    std::vector<VerifyRow> rows;
    for (const double g : gammas) {
        for (const double r : rhos) {
            const double theo = rfq::stocq_variance(q, r, g).stocq;
            const auto mc = rfq::mc_pair_estimates(q, r, g, o.m, o.reps, o.common.seed);
            const double emp = mc.simple.var * static_cast<double>(o.m);
            const double tol = std::max(0.15 * std::abs(theo), 5e-3);
            rows.push_back({"rho=" + fmt(r) + ",gamma=" + fmt(g), theo, emp, tol,
                            std::abs(emp - theo) <= tol});
        }
    }
    return rows;
}

std::vector<VerifyRow> verify_lm_mean(const VerifyOpts& o) {
    const rfq::Quantizer q = verify_quantizer(o);
    const auto gammas = o.gammas.empty() ? std::vector<double>{0.5, 1.0, 2.0} : o.gammas;
    const auto rhos = o.rhos.empty() ? std::vector<double>{0.0, 0.5, 0.9} : o.rhos;
    std::vector<VerifyRow> rows;
    for (const double g : gammas) {
        for (const double r : rhos) {
            const double theo = rfq::lm_mean(q, r, g).value;
            const auto mc = rfq::mc_pair_estimates(q, r, g, o.m, o.reps, o.common.seed);
            const double tol = o.sigma * mc.simple.se_mean;
            rows.push_back({"rho=" + fmt(r) + ",gamma=" + fmt(g), theo, mc.simple.mean,
                            mc.simple.se_mean, std::abs(mc.simple.mean - theo) <= tol});
        }
    }
    return rows;
}

std::vector<VerifyRow> verify_normalized(const VerifyOpts& o) {
    const rfq::Quantizer q = verify_quantizer(o);
    const auto gammas = o.gammas.empty() ? std::vector<double>{0.5, 1.0, 2.0} : o.gammas;
    const auto rhos = o.rhos.empty() ? std::vector<double>{0.0, 0.5, 0.9} : o.rhos;
    std::vector<VerifyRow> rows;
    for (const double g : gammas) {
        for (const double r : rhos) {
            const auto table = rfq::build_moment_table(q, r, g);
            const auto theo = rfq::normalized_mean_variance(table, o.m);
            const auto mc = rfq::mc_pair_estimates(q, r, g, o.m, o.reps, o.common.seed);
            const std::string point = "rho=" + fmt(r) + ",gamma=" + fmt(g);
            rows.push_back({point + ":mean", theo.mean, mc.normalized.mean,
                            mc.normalized.se_mean,
                            std::abs(mc.normalized.mean - theo.mean) <=
                                o.sigma * mc.normalized.se_mean});
            const double vtol = 0.15 * theo.variance;
            rows.push_back({point + ":var", theo.variance, mc.normalized.var, vtol,
                            std::abs(mc.normalized.var - theo.variance) <= vtol});
        }
    }
    return rows;
}

std::vector<VerifyRow> verify_db_dominance(const VerifyOpts& o) {
    const rfq::Quantizer q = verify_quantizer(o);
    const auto gammas = o.gammas.empty() ? std::vector<double>{0.5, 1.0, 2.0} : o.gammas;
    const auto rhos = o.rhos.empty() ? default_rho_grid() : o.rhos;
    std::vector<VerifyRow> rows;
    for (const double g : gammas) {
        const auto rep = rfq::db_variance_dominance_check(q, g, rhos);
        if (!rep.applicable) {
            rows.push_back({"gamma=" + fmt(g) + ":outside-region", 0.0, 0.0, 0.0, true});
            continue;
        }
        rows.push_back({"gamma=" + fmt(g), 1.0, rep.max_ratio, 1e-9, rep.dominated});
    }
    return rows;
}

std::vector<VerifyRow> verify_monotonicity(const VerifyOpts& o) {
    const rfq::Quantizer q = verify_quantizer(o);
    const auto rhos = o.rhos.empty() ? default_rho_grid() : o.rhos;
    const auto rep = rfq::quantized_mean_monotonicity(q, o.gamma, rhos);
    std::vector<VerifyRow> rows;
    for (std::size_t i = 1; i < rep.rhos.size(); ++i) {
        const bool asserted = rep.rhos[i - 1] >= rep.rho_floor - 1e-3;
        const bool up = rep.zeta11[i] > rep.zeta11[i - 1];
        rows.push_back({"rho=" + fmt(rep.rhos[i - 1]) + "->" + fmt(rep.rhos[i]),
                        rep.zeta11[i - 1], rep.zeta11[i], 0.0, !asserted || up});
    }
    return rows;
}

void run_verify(const VerifyOpts& o) {
    apply_threads(o.common);
    std::vector<VerifyRow> rows;
    if (o.theorem == "marginal") rows = verify_marginal(o);
    else if (o.theorem == "stocq-variance") rows = verify_stocq_variance(o);
    else if (o.theorem == "lm-mean") rows = verify_lm_mean(o);
    else if (o.theorem == "normalized") rows = verify_normalized(o);
    else if (o.theorem == "db-dominance") rows = verify_db_dominance(o);
    else if (o.theorem == "monotonicity") rows = verify_monotonicity(o);
    else
        throw std::invalid_argument(
            "unknown --theorem '" + o.theorem +
            "' (try marginal, stocq-variance, lm-mean, normalized, db-dominance, "
            "monotonicity)");

    std::string csv = timestamp_line(!o.common.no_timestamp);
    csv += "point,theoretical,empirical,stderr,pass\n";
    std::size_t failed = 0;
    for (const auto& r : rows) {
        csv += r.point + "," + fmt(r.theoretical) + "," + fmt(r.empirical) + "," +
               fmt(r.stderr_col) + "," + (r.pass ? "1" : "0") + "\n";
        if (!r.pass) ++failed;
    }
    if (o.out.empty()) std::fputs(csv.c_str(), stdout);
    else write_text(o.out, csv);
    std::fprintf(stderr, "verify %s: %zu rows, %zu failed\n", o.theorem.c_str(),
                 rows.size(), failed);
    if (failed > 0) throw verify_failed{};
}

// ------------------------------------------------------------------- kae --

struct KaeOpts {
    CommonOpts common;
    std::vector<std::string> quantizer_files;
    std::string kind;
    std::vector<int> bits;
    double gamma = 1.0;
    std::uint32_t m = 1024;
    std::uint64_t n = 0;
    std::uint32_t d = 8;
    std::string data;
    std::string format = "csv";
    std::uint64_t max_n = 4096;
    std::string out;
};

Eigen::MatrixXd kae_data(const KaeOpts& o) {
    if (!o.data.empty()) {
        const auto fmt_kind = o.format == "sparse" ? rfq::DatasetFormat::SPARSE_INDEX_VALUE
                                                   : rfq::DatasetFormat::DENSE_CSV;
        return rfq::load_dataset(o.data, fmt_kind, true).x;
    }
    if (o.n == 0)
        throw std::invalid_argument("kae: give --data FILE or a synthetic row count --n");
    return synthetic_unit_rows(o.n, o.d, o.common.seed);
}

void run_kae(const KaeOpts& o) {
    apply_threads(o.common);
    if (o.format != "csv" && o.format != "sparse")
        throw std::invalid_argument("kae: --format must be csv or sparse");
    const Eigen::MatrixXd x = kae_data(o);
    if (static_cast<std::uint64_t>(x.rows()) > o.max_n)
        throw std::invalid_argument(
            "kae: " + std::to_string(x.rows()) + " rows exceed the dense eigensolver cap " +
            std::to_string(o.max_n) + "; raise --max-n if the runtime is acceptable");

    std::vector<rfq::Quantizer> qs;
    for (const auto& path : o.quantizer_files) qs.push_back(load_quantizer_file(path));
    for (const int b : o.bits) {
        if (o.kind.empty())
            throw std::invalid_argument("kae: --bits needs --kind to build codebooks");
        qs.push_back(rfq::build_quantizer(rfq::kind_from_name(o.kind), b));
    }

    rfq::RffConfig cfg;
    cfg.gamma = o.gamma;
    cfg.m = o.m;
    cfg.d = static_cast<std::uint32_t>(x.cols());
    cfg.seed = o.common.seed;

    const Eigen::MatrixXd k = rfq::gram_exact(x, o.gamma);
    std::string csv = timestamp_line(!o.common.no_timestamp);
    csv += "method,bits,m,n,gamma,beta_f_star,beta_2_star,err_f_star,err_2_star,"
           "delta1_star,delta2_star,epsilon,degenerate\n";
    const auto line = [&](const std::string& method, int bits, const rfq::KaeReport& r) {
        csv += method + "," + std::to_string(bits) + "," + std::to_string(o.m) + "," +
               std::to_string(x.rows()) + "," + fmt(o.gamma) + "," + fmt(r.beta_f_star) +
               "," + fmt(r.beta_2_star) + "," + fmt(r.err_f_star) + "," +
               fmt(r.err_2_star) + "," + fmt(r.delta1_star) + "," + fmt(r.delta2_star) +
               "," + fmt(r.epsilon) + "," + (r.degenerate ? "1" : "0") + "\n";
    };

    line("full", 64, rfq::kae_report(rfq::gram_full(rfq::generate_rff(x, cfg)), k));
    for (const auto& q : qs) {
        const rfq::Sketch s = rfq::sketch_features(x, cfg, q, false);
        line(rfq::kind_name(q.kind), q.bits, rfq::kae_report(rfq::gram_quantized(s, q), k));
    }
    if (o.out.empty()) std::fputs(csv.c_str(), stdout);
    else write_text(o.out, csv);
    std::fprintf(stderr, "kae: %zu reports over n=%lld m=%u\n", qs.size() + 1,
                 static_cast<long long>(x.rows()), o.m);
}

// ------------------------------------------------------------------- krr --

struct KrrOpts {
    CommonOpts common;
    double gamma = 0.35;
    std::vector<std::uint32_t> m_grid;
    std::vector<std::string> methods;
    std::vector<double> lambdas;
    std::uint64_t n_train = 40000;
    std::uint64_t n_test = 10000;
    std::uint32_t d = 10;
    double beta3_sigma = 0.1;
    double noise_sigma = 1.8;
    bool row_normalize = false;
    std::string out;
};

rfq::KrrMethod parse_method(const std::string& text, bool row_normalize) {
    rfq::KrrMethod m;
    m.row_normalize = row_normalize;
    if (text == "linear") {
        m.kind = rfq::KrrMethod::Kind::LINEAR;
        return m;
    }
    if (text == "full") {
        m.kind = rfq::KrrMethod::Kind::FULL_RFF;
        return m;
    }
    const std::size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("krr: method '" + text +
                                    "' is not linear, full, or kind:bits");
    m.kind = rfq::KrrMethod::Kind::QUANTIZED;
    m.quant = rfq::kind_from_name(text.substr(0, colon));
    try {
        m.bits = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("krr: bad bits in method '" + text + "'");
    }
    if (m.bits < 1 || m.bits > 8)
        throw std::invalid_argument("krr: bits must be in 1..8 in method '" + text + "'");
    return m;
}

void run_krr(const KrrOpts& o) {
    apply_threads(o.common);
    rfq::SyntheticRegressionSpec spec;
    spec.n_train = o.n_train;
    spec.n_test = o.n_test;
    spec.d = o.d;
    spec.seed = o.common.seed;
    spec.beta3_sigma = o.beta3_sigma;
    spec.noise_sigma = o.noise_sigma;

    const auto m_grid = o.m_grid.empty()
        ? std::vector<std::uint32_t>{512, 1024, 2048, 4096} : o.m_grid;
    const auto lambdas = o.lambdas.empty()
        ? std::vector<double>{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}
        : o.lambdas;
    const auto method_names = o.methods.empty()
        ? std::vector<std::string>{"linear", "full", "lm:1", "lm:2", "stocq:1", "stocq:2"}
        : o.methods;
    std::vector<rfq::KrrMethod> methods;
    for (const auto& name : method_names)
        methods.push_back(parse_method(name, o.row_normalize));

    const auto rows = rfq::krr_sweep(spec, o.gamma, m_grid, methods, lambdas);
    std::string csv = timestamp_line(!o.common.no_timestamp);
    csv += std::string(rfq::krr_csv_header()) + "\n";
    for (const auto& r : rows) csv += rfq::krr_csv_row(r) + "\n";
    if (o.out.empty()) std::fputs(csv.c_str(), stdout);
    else write_text(o.out, csv);
    std::fprintf(stderr, "krr: %zu rows (methods x feature budgets)\n", rows.size());
}

// ---------------------------------------------------------------- sketch --

struct SketchOpts {
    CommonOpts common;
    std::string quantizer;
    double gamma = 1.0;
    std::uint32_t m = 1024;
    std::string data;
    std::string format = "csv";
    std::string synthetic;
    bool normalize = false;
    bool norms = false;
    std::string out;
};

void run_sketch(const SketchOpts& o) {
    apply_threads(o.common);
    if (o.data.empty() == o.synthetic.empty())
        throw std::invalid_argument("sketch: give exactly one of --data and --synthetic");
    Eigen::MatrixXd x;
    if (!o.synthetic.empty()) {
        const auto [n, d] = parse_shape(o.synthetic);
        x = synthetic_unit_rows(n, d, o.common.seed);
    } else {
        const auto fmt_kind = o.format == "sparse" ? rfq::DatasetFormat::SPARSE_INDEX_VALUE
                                                   : rfq::DatasetFormat::DENSE_CSV;
        x = rfq::load_dataset(o.data, fmt_kind, o.normalize).x;
    }
    const rfq::Quantizer q = load_quantizer_file(o.quantizer);
    rfq::RffConfig cfg;
    cfg.gamma = o.gamma;
    cfg.m = o.m;
    cfg.d = static_cast<std::uint32_t>(x.cols());
    cfg.seed = o.common.seed;
    const rfq::Sketch s = rfq::sketch_features(x, cfg, q, o.norms);
    const std::vector<std::uint8_t> bytes = rfq::pack(s);
    std::ofstream outf(o.out, std::ios::binary);
    if (!outf) throw rfq::corrupt_error("cannot open " + o.out + " for writing");
    outf.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    outf.flush();
    if (!outf) throw rfq::corrupt_error("write failed for " + o.out);
    std::printf("wrote %s: n=%llu m=%u bits=%d bytes=%zu\n", o.out.c_str(),
                static_cast<unsigned long long>(s.n), s.m, s.bits, bytes.size());
}

// ------------------------------------------------------------------ info --

void run_info(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    if (bytes.size() >= 4 && bytes[0] == 'R' && bytes[1] == 'F' && bytes[2] == 'Q' &&
        bytes[3] == 'S') {
        const rfq::Sketch s = rfq::unpack(bytes);
        std::printf("sketch %s\n", path.c_str());
        std::printf("n %llu\n", static_cast<unsigned long long>(s.n));
        std::printf("m %u\n", s.m);
        std::printf("bits %d\n", s.bits);
        std::printf("gamma %s\n", fmt(s.gamma).c_str());
        std::printf("seed %llu\n", static_cast<unsigned long long>(s.seed));
        std::printf("quantizer_id %016llx\n", static_cast<unsigned long long>(s.quantizer_id));
        std::printf("row_norms %s\n", s.has_norms() ? "yes" : "no");
        std::printf("row_bytes %zu\n", rfq::packed_row_bytes(s.m, s.bits));
        std::printf("bytes %zu\n", bytes.size());
        return;
    }
    rfq::Quantizer q;
    try {
        q = rfq::quantizer_parse(std::string(bytes.begin(), bytes.end()));
    } catch (const std::invalid_argument&) {
        throw rfq::corrupt_error(path + " is neither a sketch nor a quantizer file");
    }
    std::printf("quantizer %s\n", path.c_str());
    std::printf("kind %s\n", rfq::kind_name(q.kind));
    std::printf("bits %d\n", q.bits);
    std::printf("levels %zu\n", q.levels.size());
    std::printf("borders");
    for (const double b : q.borders) std::printf(" %s", fmt(b).c_str());
    std::printf("\nlevel_values");
    for (const double l : q.levels) std::printf(" %s", fmt(l).c_str());
    std::printf("\nD1 %s\n", fmt(rfq::distortion_d1(q)).c_str());
    std::printf("D2 %s\n", fmt(rfq::distortion_d2(q)).c_str());
}

// ------------------------------------------------------- build-quantizer --

void run_build_quantizer(const std::string& kind, int bits, const std::string& out) {
    if (bits < 1 || bits > 8)
        throw std::invalid_argument("build-quantizer: --bits must be in 1..8");
    const rfq::QuantKind k = rfq::kind_from_name(kind);
    if (k == rfq::QuantKind::IDENTITY)
        throw std::invalid_argument("build-quantizer: kind must be lm, lm2, or stocq");
    const rfq::Quantizer q = rfq::build_quantizer(k, bits);
    write_text(out, rfq::quantizer_dump(q));
    std::printf("wrote %s: kind=%s bits=%d\n", out.c_str(), rfq::kind_name(q.kind), bits);
    std::printf("D1 %s\n", fmt(rfq::distortion_d1(q)).c_str());
    std::printf("D2 %s\n", fmt(rfq::distortion_d2(q)).c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantized random fourier feature toolkit"};
    app.require_subcommand(1);

    // build-quantizer
    std::string bq_kind;
    int bq_bits = 0;
    std::string bq_out;
    CommonOpts bq_common;
    auto* bq = app.add_subcommand("build-quantizer", "construct and save a codebook");
    bq->add_option("--kind", bq_kind, "lm, lm2, or stocq")->required();
    bq->add_option("--bits", bq_bits, "codebook bits per feature")->required();
    bq->add_option("--out", bq_out, "output json path")->required();
    add_common(bq, bq_common, false);
    bq->callback([&] { run_build_quantizer(bq_kind, bq_bits, bq_out); });

    // info
    std::string info_path;
    auto* info = app.add_subcommand("info", "describe a quantizer or sketch file");
    info->add_option("path", info_path, "file to describe")->required();
    info->callback([&] { run_info(info_path); });

    // sketch
    SketchOpts sk;
    auto* sketch = app.add_subcommand("sketch", "quantize random features of a dataset");
    sketch->add_option("--quantizer", sk.quantizer, "codebook json")->required();
    sketch->add_option("--gamma", sk.gamma, "kernel width")->required();
    sketch->add_option("--m", sk.m, "feature count")->check(CLI::Range(1u, 1u << 24));
    sketch->add_option("--data", sk.data, "dataset file");
    sketch->add_option("--format", sk.format, "dataset layout: csv or sparse");
    sketch->add_option("--synthetic", sk.synthetic, "generate ROWSxCOLS unit rows");
    sketch->add_flag("--normalize", sk.normalize, "rescale data rows to unit norm");
    sketch->add_flag("--norms", sk.norms, "store per-row reconstruction norms");
    sketch->add_option("--out", sk.out, "output sketch path")->required();
    add_common(sketch, sk.common);
    sketch->callback([&] { run_sketch(sk); });

    // verify
    VerifyOpts vo;
    auto* verify = app.add_subcommand("verify", "check closed forms against simulation");
    verify->add_option("--theorem", vo.theorem, "which statement to check")->required();
    verify->add_option("--kind", vo.kind, "quantizer family");
    verify->add_option("--bits", vo.bits, "codebook bits");
    verify->add_option("--gammas", vo.gammas, "kernel width grid")->delimiter(',');
    verify->add_option("--rhos", vo.rhos, "correlation grid")->delimiter(',');
    verify->add_option("--gamma", vo.gamma, "single kernel width (monotonicity)");
    verify->add_option("--m", vo.m, "features per replication");
    verify->add_option("--reps", vo.reps, "monte carlo replications");
    verify->add_option("--samples", vo.samples, "draws for distribution checks");
    verify->add_option("--sigma", vo.sigma, "mean-test threshold in standard errors");
    verify->add_option("--out", vo.out, "csv report path (stdout when absent)");
    add_common(verify, vo.common);
    verify->callback([&] { run_verify(vo); });

    // kae
    KaeOpts ko;
    auto* kae = app.add_subcommand("kae", "scale-invariant kernel approximation errors");
    kae->add_option("--quantizer", ko.quantizer_files, "codebook json (repeatable)");
    kae->add_option("--kind", ko.kind, "build codebooks of this family instead");
    kae->add_option("--bits", ko.bits, "bits list for --kind")->delimiter(',');
    kae->add_option("--gamma", ko.gamma, "kernel width")->required();
    kae->add_option("--m", ko.m, "feature count");
    kae->add_option("--n", ko.n, "synthetic row count");
    kae->add_option("--d", ko.d, "synthetic dimension");
    kae->add_option("--data", ko.data, "dataset file (rows are unit-normalized)");
    kae->add_option("--format", ko.format, "dataset layout: csv or sparse");
    kae->add_option("--max-n", ko.max_n, "dense eigensolver size cap");
    kae->add_option("--out", ko.out, "csv report path (stdout when absent)");
    add_common(kae, ko.common);
    kae->callback([&] { run_kae(ko); });

    // krr
    KrrOpts kr;
    auto* krr = app.add_subcommand("krr", "ridge regression over quantized features");
    krr->add_option("--gamma", kr.gamma, "kernel width");
    krr->add_option("--m-grid", kr.m_grid, "feature budgets")->delimiter(',');
    krr->add_option("--methods", kr.methods, "linear, full, or kind:bits")->delimiter(',');
    krr->add_option("--lambdas", kr.lambdas, "ridge penalty grid")->delimiter(',');
    krr->add_option("--n-train", kr.n_train, "training rows");
    krr->add_option("--n-test", kr.n_test, "test rows");
    krr->add_option("--d", kr.d, "input dimension");
    krr->add_option("--beta3-sigma", kr.beta3_sigma, "cubic coefficient scale");
    krr->add_option("--noise-sigma", kr.noise_sigma, "additive noise scale");
    krr->add_flag("--row-normalize", kr.row_normalize, "unit-normalize feature rows");
    krr->add_option("--out", kr.out, "csv results path (stdout when absent)");
    add_common(krr, kr.common);
    krr->callback([&] { run_krr(kr); });

    try {
        std::vector<std::string> args = expand_config({argv + 1, argv + argc});
        std::reverse(args.begin(), args.end());  // parse(vector) wants reversed argv
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const verify_failed&) {
        return 3;
    } catch (const rfq::input_error& e) {
        std::fprintf(stderr, "rfq: %s\n", e.what());
        return 4;
    } catch (const rfq::corrupt_error& e) {
        std::fprintf(stderr, "rfq: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "rfq: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "rfq: %s\n", e.what());
        return 4;
    }
    return 0;
}
