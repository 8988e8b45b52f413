#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "droopgrid/case.hpp"
#include "droopgrid/dynamics.hpp"
#include "droopgrid/equilibrium.hpp"

namespace droopgrid {

enum class Method { rk4, rk45 };

Method parse_method(std::string_view text);
std::string_view method_name(Method m);

struct IntegrateOptions {
    double t_end = 30.0;
    double dt = 1e-4;
    Method method = Method::rk4;
    double output_dt = 0.0; ///< sample spacing; 0 keeps every dt
    double rtol = 1e-8;     ///< rk45 only
    double atol = 1e-8;     ///< rk45 only
};

struct TrajectoryMeta {
    std::string method;
    double dt = 0.0;
    double output_dt = 0.0;
    std::string case_hash;
    bool diverged = false;
    std::vector<std::string> warnings;
};

/// Sampled response. Column k of theta/omega/v belongs to t[k].
struct Trajectory {
    std::vector<double> t;
    MatrixXd theta;
    MatrixXd omega;
    MatrixXd v;
    TrajectoryMeta meta;

    Index buses() const { return theta.rows(); }
    Index samples() const { return static_cast<Index>(t.size()); }
    State state(Index k) const { return {theta.col(k), omega.col(k), v.col(k)}; }
};

/// Integrates the vector model from x0. A state with any |x| > 1e6 or a
/// non-positive voltage ends the run with meta.diverged set; NaN raises
/// NumericalError. rk45 lands on every output sample exactly.
Trajectory integrate(const ModelMatrices& model, const State& x0, const IntegrateOptions& options);

/// Warnings for a step that does not resolve the fastest time constants.
std::vector<std::string> step_size_warnings(const Case& c, double dt);

struct RandomDisturbance {
    double magnitude = 0.0; ///< Delta V ~ U(-magnitude, magnitude) on every bus
    std::uint64_t seed = 0;
};

struct DisturbanceSpec {
    VectorXd dtheta; ///< rad per bus; empty means zero
    VectorXd dv;     ///< p.u. per bus; empty means zero
    std::optional<RandomDisturbance> random;
};

/// Delta V = +0.01 p.u. on every inverter bus.
DisturbanceSpec default_disturbance(const Case& c);

/// Delta theta = +0.01 rad on every inverter bus.
DisturbanceSpec default_angle_disturbance(const Case& c);

/// x0 = equilibrium + offsets with omega = omega_s. Throws InputError on
/// non-finite offsets or a non-positive resulting voltage.
State apply_disturbance(const Equilibrium& eq, const DisturbanceSpec& spec);

/// `{"dtheta": {"<bus id>": rad}, "dv": {"<bus id>": pu}, "random": {"magnitude": m, "seed": s}}`
DisturbanceSpec parse_disturbance(std::string_view json_text, int n);

/// Settling times per bus; an empty optional marks an undefined value
/// (trajectory not settled in its final window).
struct SettlingTimes {
    std::vector<std::optional<double>> theta;
    std::vector<std::optional<double>> omega;
    std::vector<std::optional<double>> v;
};

/// Settling time of one sampled signal. The final value is the mean over the
/// last 5% of samples and the band is relative to the peak deviation from it.
/// Signals whose peak deviation is below 1e-9 report 0.
std::optional<double> settling_time(const std::vector<double>& t, const VectorXd& y, double band = 0.02);

/// Angles are taken relative to the final common rotation omega_inf * t.
SettlingTimes settling_times(const Trajectory& traj, double band = 0.02);

/// Slope of the least-squares line through log(y) over t in [t_from, t_to];
/// y must be positive there. Returns the decay rate (positive for decay).
double fit_decay_rate(const std::vector<double>& t, const VectorXd& y, double t_from, double t_to);

std::string trajectory_csv(const Trajectory& traj);

enum class SweepParam { t1, t2, d1, d2 };

SweepParam parse_sweep_param(std::string_view text);
std::string_view sweep_param_name(SweepParam p);

/// Sets the parameter on every inverter bus.
void set_inverter_param(Case& c, SweepParam p, double value);

enum class SweepProtocol {
    shared,      ///< one run per value with `disturbance`; angle and voltage settling read from it
    per_channel, ///< angle settling from a run with `angle_disturbance`, voltage from `disturbance`
};

SweepProtocol parse_sweep_protocol(std::string_view text);
std::string_view sweep_protocol_name(SweepProtocol p);

struct SweepPlan {
    SweepParam param = SweepParam::t1;
    std::vector<double> values;
    std::vector<std::pair<SweepParam, double>> fixed; ///< applied before the swept value
    DisturbanceSpec disturbance;
    DisturbanceSpec angle_disturbance;
    AlphaPolicy alpha;
    IntegrateOptions integrate;
    SweepProtocol protocol = SweepProtocol::shared;
    double band = 0.02;
    bool keep_trajectories = false;
    int threads = 0; ///< 0: DROOPGRID_THREADS or hardware concurrency
};

struct SweepRow {
    double param_value = 0.0;
    int bus = 0; ///< 1-based
    std::string signal;
    std::optional<double> settling;
    bool converged = false;
};

struct SweepRun {
    double value = 0.0;
    bool ok = false;
    std::string error;
    Equilibrium eq;
    SettlingTimes settling; ///< theta/omega from the angle run, v from the voltage run
    std::optional<Trajectory> trajectory;       ///< voltage (or shared) run
    std::optional<Trajectory> angle_trajectory; ///< per-channel protocol only
};

struct SweepResult {
    std::vector<SweepRun> runs; ///< in plan order
    std::vector<SweepRow> rows;
};

/// One simulation (two under the per-channel protocol) per value, the
/// equilibrium re-solved from `eq` for each. Runs execute in parallel; a
/// failing run is reported and the sweep continues.
SweepResult sweep(const Case& c, const Equilibrium& eq, const SweepPlan& plan);

std::string sweep_summary_csv(const SweepResult& r);

/// Worker count: DROOPGRID_THREADS if set and positive, else the hardware count.
int default_thread_count();

} // namespace droopgrid
