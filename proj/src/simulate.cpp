#include "droopgrid/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "droopgrid/io.hpp"
#include "droopgrid/ode.hpp"
#include "droopgrid/rng.hpp"

namespace droopgrid {

Method parse_method(std::string_view text)
{
    if (text == "rk4")
        return Method::rk4;
    if (text == "rk45")
        return Method::rk45;
    throw InputError("method must be rk4 or rk45 (got '" + std::string(text) + "')");
}

std::string_view method_name(Method m) { return m == Method::rk4 ? "rk4" : "rk45"; }

namespace {

long checked_ratio(double num, double den, const char* what)
{
    const double r = num / den;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-6 * std::max(1.0, k))
        throw InputError(std::string(what) + " must be a positive integer multiple of dt");
    return static_cast<long>(k);
}

} // namespace

Trajectory integrate(const ModelMatrices& model, const State& x0, const IntegrateOptions& options)
{
    const Index n = model.size();
    if (x0.size() != n || x0.omega.size() != n || x0.v.size() != n)
        throw InputError("initial state dimension does not match the model");
    if (!(options.dt > 0.0) || !std::isfinite(options.dt))
        throw InputError("dt must be positive");
    if (!(options.t_end > 0.0) || !std::isfinite(options.t_end))
        throw InputError("t_end must be positive");
    if (!(options.output_dt >= 0.0))
        throw InputError("output_dt must be non-negative");
    if ((x0.v.array() <= 0.0).any())
        throw InputError("initial state has a non-positive bus voltage");

    const long steps = checked_ratio(options.t_end, options.dt, "t_end");
    const long stride = options.output_dt > 0.0 ? checked_ratio(options.output_dt, options.dt, "output_dt") : 1;

    const VectorXd mp_inv = model.m_p.cwiseInverse();
    const VectorXd mq_inv = model.m_q.cwiseInverse();
    auto f = [&](const VectorXd& x) {
        const VectorXd theta = x.head(n);
        const VectorXd omega = x.segment(n, n);
        const VectorXd v = x.tail(n);
        VectorXd f_p, f_q;
        network_forces(model, theta, omega, v, f_p, f_q);
        VectorXd dx(3 * n);
        dx << omega, f_p.cwiseProduct(mp_inv), f_q.cwiseProduct(mq_inv);
        return dx;
    };

    Trajectory traj;
    traj.meta.method = std::string(method_name(options.method));
    traj.meta.dt = options.dt;
    traj.meta.output_dt = static_cast<double>(stride) * options.dt;
    std::vector<VectorXd> samples;
    VectorXd x = x0.flat();
    traj.t.push_back(0.0);
    samples.push_back(x);

    // Returns true when the state leaves the admissible region.
    auto check = [&](double t) {
        if (!x.allFinite())
            throw NumericalError("integration produced a non-finite state at t = " + format_number(t));
        return x.cwiseAbs().maxCoeff() > 1e6 || (x.tail(n).array() <= 0.0).any();
    };

    if (options.method == Method::rk4) {
        for (long k = 1; k <= steps; ++k) {
            x = rk4_step<double>(f, x, options.dt);
            const double t = static_cast<double>(k) * options.dt;
            const bool out = check(t);
            if (out || k % stride == 0) {
                traj.t.push_back(t);
                samples.push_back(x);
            }
            if (out) {
                traj.meta.diverged = true;
                break;
            }
        }
    } else {
        AdaptiveControl ctl;
        ctl.rtol = options.rtol;
        ctl.atol = options.atol;
        double h = options.dt;
        const long outputs = steps / stride;
        for (long j = 1; j <= outputs; ++j) {
            const double t0 = static_cast<double>((j - 1) * stride) * options.dt;
            const double t1 = static_cast<double>(j * stride) * options.dt;
            const bool ok = dopri5_advance(f, x, t0, t1, h, ctl);
            const bool out = check(t1);
            if (!ok && !out)
                throw NumericalError("adaptive step size collapsed at t = " + format_number(t0));
            traj.t.push_back(t1);
            samples.push_back(x);
            if (out) {
                traj.meta.diverged = true;
                break;
            }
        }
    }

    const auto count = static_cast<Index>(samples.size());
    traj.theta.resize(n, count);
    traj.omega.resize(n, count);
    traj.v.resize(n, count);
    for (Index k = 0; k < count; ++k) {
        const auto& s = samples[static_cast<std::size_t>(k)];
        traj.theta.col(k) = s.head(n);
        traj.omega.col(k) = s.segment(n, n);
        traj.v.col(k) = s.tail(n);
    }
    if (traj.meta.diverged)
        traj.meta.warnings.push_back("trajectory left the admissible region at t = " + format_number(traj.t.back())
                                     + " s and was truncated");
    return traj;
}

std::vector<std::string> step_size_warnings(const Case& c, double dt)
{
    std::vector<std::string> out;
    double fastest = std::min(c.eps.e1 / c.eps.e2, c.eps.e3);
    std::string which = c.eps.e1 / c.eps.e2 <= c.eps.e3 ? "e1/e2" : "e3";
    for (const auto& b : c.buses) {
        if (!b.is_inverter())
            continue;
        if (b.t1 < fastest) {
            fastest = b.t1;
            which = "T1 of bus " + std::to_string(b.id);
        }
        if (b.t2 < fastest) {
            fastest = b.t2;
            which = "T2 of bus " + std::to_string(b.id);
        }
    }
    if (dt > 0.1 * fastest)
        out.push_back("dt = " + format_number(dt) + " s is not small against the fastest time constant " + which
                      + " = " + format_number(fastest) + " s; the fast load-bus modes may be unresolved");
    return out;
}

DisturbanceSpec default_disturbance(const Case& c)
{
    DisturbanceSpec d;
    d.dv = VectorXd::Zero(c.size());
    for (int i = 0; i < c.size(); ++i)
        if (c.buses[static_cast<std::size_t>(i)].is_inverter())
            d.dv(i) = 0.01;
    return d;
}

DisturbanceSpec default_angle_disturbance(const Case& c)
{
    DisturbanceSpec d;
    d.dtheta = VectorXd::Zero(c.size());
    for (int i = 0; i < c.size(); ++i)
        if (c.buses[static_cast<std::size_t>(i)].is_inverter())
            d.dtheta(i) = 0.01;
    return d;
}

State apply_disturbance(const Equilibrium& eq, const DisturbanceSpec& spec)
{
    const Index n = eq.theta.size();
    State x = eq.state();
    auto add = [&](VectorXd& target, const VectorXd& offset, const char* what) {
        if (offset.size() == 0)
            return;
        if (offset.size() != n)
            throw InputError(std::string(what) + " has " + std::to_string(offset.size()) + " entries, expected "
                             + std::to_string(n));
        if (!offset.allFinite())
            throw InputError(std::string(what) + " offsets must be finite");
        target += offset;
    };
    add(x.theta, spec.dtheta, "dtheta");
    add(x.v, spec.dv, "dv");
    if (spec.random) {
        if (!(spec.random->magnitude >= 0.0) || !std::isfinite(spec.random->magnitude))
            throw InputError("random disturbance magnitude must be finite and non-negative");
        Rng rng(spec.random->seed);
        for (Index i = 0; i < n; ++i)
            x.v(i) += rng.uniform(-spec.random->magnitude, spec.random->magnitude);
    }
    for (Index i = 0; i < n; ++i)
        if (!(x.v(i) > 0.0))
            throw InputError("disturbance drives the voltage of bus " + std::to_string(i + 1) + " to "
                             + format_number(x.v(i)) + " p.u.; it must stay positive");
    return x;
}

DisturbanceSpec parse_disturbance(std::string_view json_text, int n)
{
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("disturbance is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw InputError("disturbance: expected an object");

    DisturbanceSpec spec;
    auto offsets = [&](const char* key) {
        VectorXd out = VectorXd::Zero(n);
        if (!doc.contains(key))
            return out;
        const auto& obj = doc.at(key);
        if (!obj.is_object())
            throw InputError(std::string(key) + ": expected an object keyed by bus id");
        for (const auto& [id, value] : obj.items()) {
            char* end = nullptr;
            const long bus = std::strtol(id.c_str(), &end, 10);
            if (end == id.c_str() || *end != '\0' || bus < 1 || bus > n)
                throw InputError(std::string(key) + "." + id + ": not a bus id in 1.." + std::to_string(n));
            if (!value.is_number() || !std::isfinite(value.get<double>()))
                throw InputError(std::string(key) + "." + id + ": expected a finite number");
            out(bus - 1) = value.get<double>();
        }
        return out;
    };
    for (const auto& [key, value] : doc.items())
        if (key != "dtheta" && key != "dv" && key != "random")
            throw InputError("disturbance." + key + ": unknown field");
    spec.dtheta = offsets("dtheta");
    spec.dv = offsets("dv");
    if (doc.contains("random")) {
        const auto& r = doc.at("random");
        if (!r.is_object() || !r.contains("magnitude") || !r.at("magnitude").is_number())
            throw InputError("random.magnitude: expected a number");
        if (!r.contains("seed") || !r.at("seed").is_number_unsigned())
            throw InputError("random.seed: expected a non-negative integer");
        spec.random = RandomDisturbance{r.at("magnitude").get<double>(), r.at("seed").get<std::uint64_t>()};
    }
    return spec;
}

std::optional<double> settling_time(const std::vector<double>& t, const VectorXd& y, double band)
{
    const auto count = static_cast<Index>(t.size());
    if (count != y.size())
        throw InputError("settling_time: time and signal lengths differ");
    if (count < 2)
        return std::nullopt;
    const Index window = std::max<Index>(2, static_cast<Index>(std::ceil(0.05 * static_cast<double>(count))));
    const double y_inf = y.tail(window).mean();
    const VectorXd dev = (y.array() - y_inf).abs();
    const double amplitude = dev.maxCoeff();
    if (amplitude < 1e-9)
        return 0.0;
    if (!(dev.tail(window).maxCoeff() < band * amplitude / 10.0))
        return std::nullopt;

    const double threshold = band * amplitude;
    Index last = -1;
    for (Index k = count - 1; k >= 0; --k)
        if (dev(k) > threshold) {
            last = k;
            break;
        }
    if (last < 0)
        return 0.0;
    const auto j = static_cast<std::size_t>(last);
    const double frac = (dev(last) - threshold) / (dev(last) - dev(last + 1));
    return t[j] + (t[j + 1] - t[j]) * frac - t.front();
}

SettlingTimes settling_times(const Trajectory& traj, double band)
{
    const Index n = traj.buses();
    SettlingTimes s;
    s.theta.resize(static_cast<std::size_t>(n));
    s.omega.resize(static_cast<std::size_t>(n));
    s.v.resize(static_cast<std::size_t>(n));
    if (traj.meta.diverged || traj.samples() < 2)
        return s;

    const Index count = traj.samples();
    const Index window = std::max<Index>(2, static_cast<Index>(std::ceil(0.05 * static_cast<double>(count))));
    const Eigen::Map<const VectorXd> t(traj.t.data(), count);
    for (Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double omega_inf = traj.omega.row(i).tail(window).mean();
        const VectorXd theta = traj.theta.row(i).transpose() - omega_inf * t;
        s.theta[k] = settling_time(traj.t, theta, band);
        s.omega[k] = settling_time(traj.t, traj.omega.row(i).transpose(), band);
        s.v[k] = settling_time(traj.t, traj.v.row(i).transpose(), band);
    }
    return s;
}

double fit_decay_rate(const std::vector<double>& t, const VectorXd& y, double t_from, double t_to)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_from || t[k] > t_to)
            continue;
        const double yk = y(static_cast<Index>(k));
        if (!(yk > 0.0))
            throw InputError("fit_decay_rate: signal must be positive in the fit window");
        const double ly = std::log(yk);
        sx += t[k];
        sy += ly;
        sxx += t[k] * t[k];
        sxy += t[k] * ly;
        ++m;
    }
    if (m < 2)
        throw InputError("fit_decay_rate: fewer than two samples in the fit window");
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return -slope;
}

std::string trajectory_csv(const Trajectory& traj)
{
    const Index n = traj.buses();
    std::string out = "t";
    for (const char* prefix : {"theta_", "omega_", "v_"})
        for (Index i = 0; i < n; ++i)
            out += "," + std::string(prefix) + std::to_string(i + 1);
    out += '\n';
    for (Index k = 0; k < traj.samples(); ++k) {
        out += format_number(traj.t[static_cast<std::size_t>(k)]);
        for (const MatrixXd* m : {&traj.theta, &traj.omega, &traj.v})
            for (Index i = 0; i < n; ++i) {
                out += ',';
                out += format_number((*m)(i, k));
            }
        out += '\n';
    }
    return out;
}

SweepParam parse_sweep_param(std::string_view text)
{
    if (text == "T1")
        return SweepParam::t1;
    if (text == "T2")
        return SweepParam::t2;
    if (text == "D1")
        return SweepParam::d1;
    if (text == "D2")
        return SweepParam::d2;
    throw InputError("parameter must be T1, T2, D1 or D2 (got '" + std::string(text) + "')");
}

std::string_view sweep_param_name(SweepParam p)
{
    switch (p) {
    case SweepParam::t1:
        return "T1";
    case SweepParam::t2:
        return "T2";
    case SweepParam::d1:
        return "D1";
    case SweepParam::d2:
        return "D2";
    }
    return "";
}

void set_inverter_param(Case& c, SweepParam p, double value)
{
    if (!(value > 0.0) || !std::isfinite(value))
        throw InputError(std::string(sweep_param_name(p)) + " must be positive (got " + format_number(value) + ")");
    for (auto& b : c.buses) {
        if (!b.is_inverter())
            continue;
        switch (p) {
        case SweepParam::t1:
            b.t1 = value;
            break;
        case SweepParam::t2:
            b.t2 = value;
            break;
        case SweepParam::d1:
            b.d1 = value;
            break;
        case SweepParam::d2:
            b.d2 = value;
            break;
        }
    }
}

SweepProtocol parse_sweep_protocol(std::string_view text)
{
    if (text == "shared")
        return SweepProtocol::shared;
    if (text == "per-channel")
        return SweepProtocol::per_channel;
    throw InputError("protocol must be shared or per-channel (got '" + std::string(text) + "')");
}

std::string_view sweep_protocol_name(SweepProtocol p)
{
    return p == SweepProtocol::shared ? "shared" : "per-channel";
}

int default_thread_count()
{
    if (const char* env = std::getenv("DROOPGRID_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw InputError("DROOPGRID_THREADS must be a positive integer (got '" + std::string(env) + "')");
        return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

SweepRun run_one(const Case& base, const Equilibrium& eq, const SweepPlan& plan, double value)
{
    SweepRun run;
    run.value = value;
    try {
        Case c = base;
        for (const auto& [p, v] : plan.fixed)
            set_inverter_param(c, p, v);
        set_inverter_param(c, plan.param, value);
        const auto net = make_network(c);
        const auto model = build_model(c, net.ybus, net.inc, case_alpha(c, net.ybus, plan.alpha));
        run.eq = solve_equilibrium(model, eq);
        const auto hash = case_hash(c);

        auto simulate = [&](const DisturbanceSpec& d) {
            auto traj = integrate(model, apply_disturbance(run.eq, d), plan.integrate);
            traj.meta.case_hash = hash;
            return traj;
        };
        auto traj = simulate(plan.disturbance);
        run.settling = settling_times(traj, plan.band);
        bool diverged = traj.meta.diverged;
        if (plan.protocol == SweepProtocol::per_channel) {
            auto angle = simulate(plan.angle_disturbance);
            const auto s = settling_times(angle, plan.band);
            run.settling.theta = s.theta;
            run.settling.omega = s.omega;
            diverged = diverged || angle.meta.diverged;
            if (plan.keep_trajectories)
                run.angle_trajectory = std::move(angle);
        }
        if (plan.keep_trajectories)
            run.trajectory = std::move(traj);
        run.ok = !diverged;
        if (diverged)
            run.error = "trajectory diverged";
    } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
    }
    return run;
}

} // namespace

SweepResult sweep(const Case& c, const Equilibrium& eq, const SweepPlan& plan)
{
    if (plan.values.empty())
        throw InputError("sweep needs at least one parameter value");
    for (double v : plan.values)
        if (!(v > 0.0) || !std::isfinite(v))
            throw InputError("sweep values must be positive (got " + format_number(v) + ")");

    SweepResult result;
    result.runs.resize(plan.values.size());
    const int threads = std::min<int>(plan.threads > 0 ? plan.threads : default_thread_count(),
                                      static_cast<int>(plan.values.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < plan.values.size(); k = next++)
            result.runs[k] = run_one(c, eq, plan, plan.values[k]);
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    for (const auto& run : result.runs) {
        for (int i = 0; i < c.size(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            const auto theta = run.ok ? run.settling.theta[k] : std::nullopt;
            const auto v = run.ok ? run.settling.v[k] : std::nullopt;
            result.rows.push_back({run.value, i + 1, "theta", theta, theta.has_value()});
            result.rows.push_back({run.value, i + 1, "v", v, v.has_value()});
        }
    }
    return result;
}

std::string sweep_summary_csv(const SweepResult& r)
{
    std::string out = "param_value,bus,signal,settling_time_s,converged\n";
    for (const auto& row : r.rows) {
        out += format_number(row.param_value) + "," + std::to_string(row.bus) + "," + row.signal + ","
            + (row.settling ? format_number(*row.settling) : std::string("nan")) + ","
            + (row.converged ? "true" : "false") + "\n";
    }
    return out;
}

} // namespace droopgrid
