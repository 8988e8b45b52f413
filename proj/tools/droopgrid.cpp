// Command-line front end. Exit codes: 0 success, 1 negative verdict,
// 2 input or usage error, 3 numerical failure.

#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "droopgrid/case.hpp"
#include "droopgrid/equilibrium.hpp"
#include "droopgrid/io.hpp"
#include "droopgrid/simulate.hpp"
#include "droopgrid/smallsignal.hpp"
#include "droopgrid/stability.hpp"

using namespace droopgrid;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kNegative = 1, kInput = 2, kNumerical = 3 };

struct Common {
    std::string case_name;
    std::string eq_path;
    std::string alpha = "auto";
    std::string output;
    bool timestamp = false;
    bool deterministic = false;
};

struct Prepared {
    Case c;
    VectorXd alpha;
    ModelMatrices model;
    Equilibrium eq;
};

void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
        std::cout << text;
    else
        write_text_file(path, text);
}

// Flags > case file > defaults: an explicit --alpha replaces the per-bus overrides.
VectorXd resolve_alpha(const Case& c, const YBus& ybus, const std::string& text, bool explicit_flag)
{
    const auto policy = AlphaPolicy::parse(text);
    return explicit_flag ? select_alpha(ybus, c.size(), policy) : case_alpha(c, ybus, policy);
}

Prepared prepare(const Common& o, bool alpha_explicit, const std::string& calibrate_from = {},
                 double calibration_tol = 1e-3)
{
    Prepared p;
    p.c = resolve_case(o.case_name);
    const auto net = make_network(p.c);
    p.alpha = resolve_alpha(p.c, net.ybus, o.alpha, alpha_explicit);
    if (!calibrate_from.empty()) {
        const auto target = parse_equilibrium_json(read_text_file(calibrate_from));
        p.c = calibrate_references(p.c, {target.theta, target.v}, p.alpha, calibration_tol);
    } else {
        p.c = calibrate_bundled(p.c, p.alpha);
    }
    if (!p.c.calibrated())
        throw InputError("case '" + p.c.name + "' has uncalibrated references; pass --calibrate-from");
    p.model = build_model(p.c, net.ybus, net.inc, p.alpha);

    if (!o.eq_path.empty()) {
        p.eq = parse_equilibrium_json(read_text_file(o.eq_path));
        if (p.eq.theta.size() != p.c.size())
            throw InputError(o.eq_path + ": equilibrium has " + std::to_string(p.eq.theta.size())
                             + " buses, case has " + std::to_string(p.c.size()));
        const double res =
            equilibrium_residual(p.model, p.eq.theta, p.eq.v, p.eq.omega_s).cwiseAbs().maxCoeff();
        if (!(res <= 1e-6))
            throw InputError(o.eq_path + ": not an equilibrium of this case under alpha " + o.alpha + " (residual "
                             + format_number(res) + ")");
        p.eq.residual_norm = res;
    } else {
        p.eq = solve_equilibrium(p.model);
    }
    return p;
}

json meta_json(const Common& o, const Prepared& p)
{
    json m = {{"case", p.c.name}, {"case_hash", case_hash(p.c)}, {"alpha_policy", o.alpha}};
    m["alpha"] = json::array();
    for (Index i = 0; i < p.alpha.size(); ++i)
        m["alpha"].push_back(round12(p.alpha(i)));
    if (o.timestamp && !o.deterministic)
        m["generated_at"] = static_cast<long long>(std::time(nullptr));
    return m;
}

json vector_json(const VectorXd& v)
{
    auto a = json::array();
    for (Index i = 0; i < v.size(); ++i)
        a.push_back(round12(v(i)));
    return a;
}

std::vector<double> parse_values(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0')
            throw InputError("--values: '" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty())
        throw InputError("--values: expected a comma-separated list");
    return out;
}

void add_common(CLI::App* sub, Common& o, bool with_eq)
{
    sub->add_option("case", o.case_name, "Builtin case name (ieee9) or case file")->required();
    if (with_eq)
        sub->add_option("--eq", o.eq_path, "Equilibrium JSON; solved from a flat start when omitted");
    sub->add_option("--alpha", o.alpha,
                    "auto (pi - mean admittance angle), traditional (pi/2) or a value in rad; "
                    "an explicit flag replaces per-bus overrides from the case file")
        ->capture_default_str();
    sub->add_option("-o,--output", o.output, "Output file (default: standard output)");
    sub->add_flag("--timestamp", o.timestamp, "Add meta.generated_at to JSON reports");
    sub->add_flag("--deterministic", o.deterministic, "Suppress meta.generated_at even with --timestamp");
}

} // namespace

int run(int argc, char** argv)
{
    CLI::App app{"Generalized droop control analysis for lossy inverter networks"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto* case_cmd = app.add_subcommand("case", "Case file utilities");
    case_cmd->require_subcommand(1);

    std::string validate_path;
    auto* validate = case_cmd->add_subcommand("validate", "Parse and validate a case file");
    validate->add_option("file", validate_path, "Case file or builtin name")->required();

    std::string gen_base, gen_out = "-";
    double rx_mean = 0.7, rx_std = 0.1;
    std::uint64_t seed = 0;
    auto* gen = case_cmd->add_subcommand("gen", "Generate a lossy variant: R = X * r, r ~ N(rx-mean, rx-std^2), r > 0");
    gen->add_option("--base", gen_base, "Builtin name or case file")->required();
    gen->add_option("--rx-mean", rx_mean, "Mean R/X ratio")->capture_default_str();
    gen->add_option("--rx-std", rx_std, "Standard deviation of R/X")->capture_default_str();
    gen->add_option("--seed", seed, "PRNG seed (std::mt19937_64)")->capture_default_str();
    gen->add_option("-o,--output", gen_out, "Output file (default: standard output)");

    Common eq_o;
    std::string calibrate_from;
    double calibration_tol = 1e-3;
    auto* eq_cmd = app.add_subcommand("equilibrium", "Solve for the synchronized operating point (Newton, tol 1e-8)");
    add_common(eq_cmd, eq_o, false);
    eq_cmd->add_option("--calibrate-from", calibrate_from,
                       "Equilibrium JSON whose state fills uncalibrated references (omega_s = 0)");
    eq_cmd->add_option("--calibration-tol", calibration_tol,
                       "Allowed mismatch between specified and required references (p.u.)")
        ->capture_default_str();
    eq_cmd->add_option("--guess", eq_o.eq_path, "Equilibrium JSON used as the Newton starting point");

    Common ss_o;
    std::string dump_dir;
    auto* ss_cmd = app.add_subcommand("smallsignal", "Linearize at the equilibrium and report coupling");
    add_common(ss_cmd, ss_o, true);
    ss_cmd->add_option("--dump-matrices", dump_dir, "Write J, J_A, J_V, L1, L2, L_lp as CSV into this directory");

    Common st_o;
    AssumptionThresholds thresholds;
    auto* st_cmd = app.add_subcommand("stability", "Spectra, assumption checks and structural certificates; exit 1 "
                                                   "when a certificate is withheld");
    add_common(st_cmd, st_o, true);
    st_cmd->add_option("--max-angle-deg", thresholds.max_angle_diff_deg, "Line angle difference threshold (deg)")
        ->capture_default_str();
    st_cmd->add_option("--phi-spread", thresholds.phi_spread_rad, "Admittance angle spread threshold (rad)")
        ->capture_default_str();
    st_cmd->add_option("--alpha-tol", thresholds.alpha_conformity, "Allowed |alpha - (pi - phi0)| (rad)")
        ->capture_default_str();

    Common sim_o;
    std::string perturb_path, method = "rk4";
    IntegrateOptions integ;
    integ.output_dt = 0.01;
    auto* sim_cmd = app.add_subcommand("simulate", "Integrate a disturbed trajectory to CSV; exit 1 on divergence");
    add_common(sim_cmd, sim_o, true);
    sim_cmd->add_option("--perturb", perturb_path,
                        "Disturbance JSON {dtheta:{bus:rad}, dv:{bus:pu}, random:{magnitude,seed}}; default "
                        "dV = +0.01 p.u. on every inverter bus");
    sim_cmd->add_option("--t-end", integ.t_end, "End time (s)")->capture_default_str();
    sim_cmd->add_option("--dt", integ.dt, "Integration step (s); rk45 starts from it")->capture_default_str();
    sim_cmd->add_option("--method", method, "rk4 (fixed step) or rk45 (Dormand-Prince, tol 1e-8)")
        ->capture_default_str();
    sim_cmd->add_option("--output-dt", integ.output_dt, "Output sample spacing (s), a multiple of dt; 0 keeps every step")
        ->capture_default_str();

    Common sw_o;
    std::string sw_param, sw_values, sw_perturb, sw_method = "rk4", sw_protocol = "shared", traj_dir;
    std::vector<std::string> fixed_specs;
    IntegrateOptions sw_integ;
    sw_integ.t_end = 120.0;
    sw_integ.output_dt = 0.01;
    double band = 0.02;
    auto* sw_cmd = app.add_subcommand("sweep", "Settling times across values of one inverter parameter; exit 1 when a "
                                               "run fails or does not settle");
    sw_cmd->footer("Runs execute in parallel; DROOPGRID_THREADS caps the worker count.");
    add_common(sw_cmd, sw_o, true);
    sw_cmd->add_option("--param", sw_param, "T1, T2, D1 or D2 (applied to every inverter)")->required();
    sw_cmd->add_option("--values", sw_values, "Comma-separated values")->required();
    sw_cmd->add_option("--fixed", fixed_specs, "Extra overrides such as T2=10 (repeatable)");
    sw_cmd->add_option("--perturb", sw_perturb, "Disturbance JSON for the voltage (or shared) run");
    sw_cmd->add_option("--protocol", sw_protocol,
                       "shared: one run with the disturbance; per-channel: angle settling from a separate "
                       "dtheta = +0.01 rad run on the inverter buses")
        ->capture_default_str();
    sw_cmd->add_option("--t-end", sw_integ.t_end, "End time (s); long enough for the slowest voltage mode")
        ->capture_default_str();
    sw_cmd->add_option("--dt", sw_integ.dt, "Integration step (s)")->capture_default_str();
    sw_cmd->add_option("--method", sw_method, "rk4 or rk45")->capture_default_str();
    sw_cmd->add_option("--output-dt", sw_integ.output_dt, "Trajectory sample spacing (s)")->capture_default_str();
    sw_cmd->add_option("--band", band, "Settling band relative to the peak deviation")->capture_default_str();
    sw_cmd->add_option("--traj-dir", traj_dir, "Write one trajectory CSV per run into this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return kInput;
    }

    try {
        if (*validate) {
            const auto c = resolve_case(validate_path);
            std::cout << "ok: " << c.name << " (" << c.size() << " buses, " << c.lines.size() << " lines)\n";
            for (const auto& w : case_advisories(c))
                std::cerr << "warning: " << w << "\n";
            return kOk;
        }
        if (*gen) {
            const auto c = gen_lossy_variant(resolve_case(gen_base), rx_mean, rx_std, seed);
            for (const auto& w : c.warnings)
                std::cerr << "warning: " << w << "\n";
            emit(gen_out, serialize_case(c));
            return kOk;
        }
        if (*eq_cmd) {
            Prepared p;
            p.c = resolve_case(eq_o.case_name);
            const auto net = make_network(p.c);
            p.alpha = resolve_alpha(p.c, net.ybus, eq_o.alpha, eq_cmd->count("--alpha") > 0);
            if (!calibrate_from.empty()) {
                const auto target = parse_equilibrium_json(read_text_file(calibrate_from));
                p.c = calibrate_references(p.c, {target.theta, target.v}, p.alpha, calibration_tol);
            } else {
                p.c = calibrate_bundled(p.c, p.alpha);
            }
            std::optional<Equilibrium> guess;
            if (!eq_o.eq_path.empty())
                guess = parse_equilibrium_json(read_text_file(eq_o.eq_path));
            const auto eq = solve_equilibrium(p.c, p.alpha, guess);
            emit(eq_o.output, equilibrium_json(eq));
            return kOk;
        }
        if (*ss_cmd) {
            const auto p = prepare(ss_o, ss_cmd->count("--alpha") > 0);
            const auto ss = assemble_jacobian(p.model, p.eq);
            const auto cm = coupling_measure(ss);
            json doc;
            doc["meta"] = meta_json(ss_o, p);
            doc["coupling"] = {{"w2_max", round12(cm.w2_max)}, {"offblock_ratio", round12(cm.offblock_ratio)}};
            doc["edges"] = json::array();
            for (std::size_t m = 0; m < p.model.edges.size(); ++m) {
                const auto& ed = p.model.edges[m];
                const auto k = static_cast<Index>(m);
                doc["edges"].push_back({{"from", ed.from + 1},
                                        {"to", ed.to + 1},
                                        {"u", round12(ss.u(k))},
                                        {"w1", round12(ss.w1(k))},
                                        {"w2", round12(ss.w2(k))}});
            }
            doc["p_hat"] = vector_json(ss.p_hat);
            doc["q_hat"] = vector_json(ss.q_hat);
            doc["jacobian_norm"] = round12(ss.j.norm());
            if (!dump_dir.empty()) {
                std::filesystem::create_directories(dump_dir);
                const std::pair<const char*, const MatrixXd*> mats[] = {{"J", &ss.j},   {"J_A", &ss.j_a},
                                                                        {"J_V", &ss.j_v}, {"L1", &ss.l1},
                                                                        {"L2", &ss.l2}, {"L_lp", &ss.l_lp}};
                for (const auto& [name, m] : mats)
                    write_text_file(dump_dir + "/" + name + ".csv", matrix_csv(name, *m));
            }
            emit(ss_o.output, doc.dump(2) + "\n");
            return kOk;
        }
        if (*st_cmd) {
            const auto p = prepare(st_o, st_cmd->count("--alpha") > 0);
            const auto r = analyze_stability(p.c, p.model, p.eq, thresholds);
            auto doc = json::parse(stability_report_json(r));
            doc["meta"] = meta_json(st_o, p);
            if (st_o.output.empty() || st_o.output == "-") {
                std::cout << doc.dump(2) << "\n";
            } else {
                write_text_file(st_o.output, doc.dump(2) + "\n");
                std::cout << stability_report_text(r);
            }
            return r.certified() ? kOk : kNegative;
        }
        if (*sim_cmd) {
            const auto p = prepare(sim_o, sim_cmd->count("--alpha") > 0);
            integ.method = parse_method(method);
            for (const auto& w : step_size_warnings(p.c, integ.dt))
                std::cerr << "warning: " << w << "\n";
            const auto spec = perturb_path.empty() ? default_disturbance(p.c)
                                                   : parse_disturbance(read_text_file(perturb_path), p.c.size());
            auto traj = integrate(p.model, apply_disturbance(p.eq, spec), integ);
            traj.meta.case_hash = case_hash(p.c);
            for (const auto& w : traj.meta.warnings)
                std::cerr << "warning: " << w << "\n";
            emit(sim_o.output, trajectory_csv(traj));
            return traj.meta.diverged ? kNegative : kOk;
        }
        if (*sw_cmd) {
            const auto p = prepare(sw_o, sw_cmd->count("--alpha") > 0);
            SweepPlan plan;
            plan.param = parse_sweep_param(sw_param);
            plan.values = parse_values(sw_values);
            for (const auto& spec : fixed_specs) {
                const auto eqpos = spec.find('=');
                if (eqpos == std::string::npos)
                    throw InputError("--fixed expects NAME=VALUE (got '" + spec + "')");
                const auto vals = parse_values(spec.substr(eqpos + 1));
                plan.fixed.emplace_back(parse_sweep_param(spec.substr(0, eqpos)), vals.front());
            }
            plan.disturbance = sw_perturb.empty() ? default_disturbance(p.c)
                                                  : parse_disturbance(read_text_file(sw_perturb), p.c.size());
            plan.angle_disturbance = default_angle_disturbance(p.c);
            plan.alpha = AlphaPolicy::parse(sw_o.alpha);
            sw_integ.method = parse_method(sw_method);
            plan.integrate = sw_integ;
            plan.protocol = parse_sweep_protocol(sw_protocol);
            plan.band = band;
            plan.keep_trajectories = !traj_dir.empty();
            for (const auto& w : step_size_warnings(p.c, sw_integ.dt))
                std::cerr << "warning: " << w << "\n";

            // The sweep re-derives alpha per run from the policy; apply the
            // same per-bus overrides rule as the other commands.
            Case base = p.c;
            if (sw_cmd->count("--alpha") > 0)
                for (auto& b : base.buses)
                    b.alpha_override.reset();
            const auto result = sweep(base, p.eq, plan);

            bool all_ok = true;
            for (const auto& run : result.runs)
                if (!run.ok) {
                    all_ok = false;
                    std::cerr << "warning: run " << sw_param << "=" << format_number(run.value)
                              << " failed: " << run.error << "\n";
                }
            for (const auto& row : result.rows)
                all_ok = all_ok && row.converged;
            if (!traj_dir.empty()) {
                std::filesystem::create_directories(traj_dir);
                for (const auto& run : result.runs) {
                    const auto stem = traj_dir + "/" + sw_param + "_" + format_number(run.value);
                    if (run.trajectory)
                        write_text_file(stem + ".csv", trajectory_csv(*run.trajectory));
                    if (run.angle_trajectory)
                        write_text_file(stem + "_angle.csv", trajectory_csv(*run.angle_trajectory));
                }
            }
            emit(sw_o.output, sweep_summary_csv(result));
            return all_ok ? kOk : kNegative;
        }
    } catch (const InputError& e) {
        std::cerr << "error: input: " << e.what() << "\n";
        return kInput;
    } catch (const NumericalError& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return kInput;
    }
    return kInput;
}

int main(int argc, char** argv) { return run(argc, argv); }
