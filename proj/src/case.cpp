#include "droopgrid/case.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>

#include <json.hpp>

#include "droopgrid/error.hpp"
#include "droopgrid/io.hpp"
#include "droopgrid/rng.hpp"

namespace droopgrid {

using nlohmann::json;

namespace {

std::string bus_path(std::size_t i) { return "buses[" + std::to_string(i) + "]"; }

const json& require(const json& obj, const char* key, const std::string& path)
{
    if (!obj.is_object() || !obj.contains(key))
        throw InputError(path + "." + key + ": missing required field");
    return obj.at(key);
}

double number_at(const json& v, const std::string& path)
{
    if (!v.is_number())
        throw InputError(path + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        throw InputError(path + ": must be finite");
    return d;
}

int integer_at(const json& v, const std::string& path)
{
    if (!v.is_number_integer())
        throw InputError(path + ": expected an integer");
    return v.get<int>();
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& path)
{
    if (!obj.contains(key) || obj.at(key).is_null())
        return std::nullopt;
    return number_at(obj.at(key), path + "." + key);
}

Bus parse_bus(const json& jb, std::size_t i)
{
    const auto path = bus_path(i);
    if (!jb.is_object())
        throw InputError(path + ": expected an object");
    Bus b;
    b.id = integer_at(require(jb, "id", path), path + ".id");
    const auto& kind = require(jb, "kind", path);
    if (kind == "inverter")
        b.kind = BusKind::inverter;
    else if (kind == "load")
        b.kind = BusKind::load;
    else
        throw InputError(path + ".kind: expected \"inverter\" or \"load\"");

    b.p0_net = optional_number(jb, "p0_net", path);
    b.q0_net = optional_number(jb, "q0_net", path);
    b.alpha_override = optional_number(jb, "alpha_override", path);
    if (auto v0 = optional_number(jb, "v0", path))
        b.v0 = *v0;

    const char* droop_keys[] = {"d1", "d2", "t1", "t2"};
    if (b.is_inverter()) {
        b.d1 = number_at(require(jb, "d1", path), path + ".d1");
        b.d2 = number_at(require(jb, "d2", path), path + ".d2");
        b.t1 = number_at(require(jb, "t1", path), path + ".t1");
        b.t2 = number_at(require(jb, "t2", path), path + ".t2");
        if (!jb.contains("v0") || jb.at("v0").is_null())
            throw InputError(path + ".v0: missing required field");
    } else {
        for (const char* key : droop_keys)
            if (jb.contains(key) && !jb.at(key).is_null())
                throw InputError(path + "." + key + ": load bus " + std::to_string(b.id)
                                 + " must not carry droop parameters");
    }
    return b;
}

json bus_to_json(const Bus& b)
{
    json jb;
    jb["id"] = b.id;
    jb["kind"] = b.is_inverter() ? "inverter" : "load";
    jb["p0_net"] = b.p0_net ? json(round12(*b.p0_net)) : json(nullptr);
    jb["q0_net"] = b.q0_net ? json(round12(*b.q0_net)) : json(nullptr);
    if (b.is_inverter()) {
        jb["d1"] = round12(b.d1);
        jb["d2"] = round12(b.d2);
        jb["t1"] = round12(b.t1);
        jb["t2"] = round12(b.t2);
    }
    jb["v0"] = round12(b.v0);
    if (b.alpha_override)
        jb["alpha_override"] = round12(*b.alpha_override);
    return jb;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

bool Case::calibrated() const
{
    return std::all_of(buses.begin(), buses.end(), [](const Bus& b) { return b.p0_net && b.q0_net; });
}

int Case::reference_bus() const
{
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].is_inverter())
            return static_cast<int>(i);
    throw InputError("case has no inverter bus");
}

void validate_case(const Case& c)
{
    const int n = c.size();
    if (n == 0)
        throw InputError("buses: case has no buses");
    bool any_inverter = false;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        const auto& b = c.buses[i];
        const auto path = bus_path(i);
        if (b.id != static_cast<int>(i) + 1)
            throw InputError(path + ".id: bus ids must be contiguous 1.." + std::to_string(n)
                             + " in order (found " + std::to_string(b.id) + ")");
        if (!(b.v0 > 0.0))
            throw InputError(path + ".v0: bus " + std::to_string(b.id) + " nominal voltage must be positive");
        if (b.is_inverter()) {
            any_inverter = true;
            const std::pair<const char*, double> params[] = {{"d1", b.d1}, {"d2", b.d2}, {"t1", b.t1}, {"t2", b.t2}};
            for (const auto& [key, value] : params)
                if (!(value > 0.0) || !std::isfinite(value))
                    throw InputError(path + "." + key + ": inverter bus " + std::to_string(b.id) + " requires "
                                     + key + " > 0 (got " + format_number(value) + ")");
        } else if (b.d1 != 0.0 || b.d2 != 0.0 || b.t1 != 0.0 || b.t2 != 0.0) {
            throw InputError(path + ": load bus " + std::to_string(b.id) + " must not carry droop parameters");
        }
        if (b.alpha_override && !(*b.alpha_override >= 0.0 && *b.alpha_override <= kPi / 2))
            throw InputError(path + ".alpha_override: must lie in [0, pi/2]");
    }
    if (!any_inverter)
        throw InputError("buses: at least one inverter bus is required");
    const std::pair<const char*, double> eps[] = {{"e1", c.eps.e1}, {"e2", c.eps.e2}, {"e3", c.eps.e3}};
    for (const auto& [key, value] : eps)
        if (!(value > 0.0) || !std::isfinite(value))
            throw InputError(std::string("eps.") + key + ": must be positive");
    if (!std::isfinite(c.omega0))
        throw InputError("omega0: must be finite");
    try {
        validate_lines(n, c.lines);
    } catch (const InputError& e) {
        throw InputError(std::string("lines: ") + e.what());
    }
    if (!is_connected(n, c.lines))
        throw InputError("lines: network is not connected");
}

std::vector<std::string> case_advisories(const Case& c)
{
    std::vector<std::string> notes;
    const double ratio = c.eps.e1 / (c.eps.e2 * c.eps.e2);
    if (ratio < 0.1 || ratio > 10.0)
        notes.push_back("eps.e1 is not on the order of eps.e2^2 (ratio " + format_number(ratio) + ")");
    if (!c.calibrated())
        notes.push_back("case has uncalibrated references; run equilibrium --calibrate-from first");
    return notes;
}

Case parse_case(std::string_view json_text)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("case document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw InputError("case document must be a JSON object");

    Case c;
    const auto& meta = require(doc, "meta", "");
    const auto& name = require(meta, "name", "meta");
    if (!name.is_string())
        throw InputError("meta.name: expected a string");
    c.name = name.get<std::string>();
    c.base_mva = optional_number(meta, "base_mva", "meta");
    if (meta.contains("warnings") && meta.at("warnings").is_array())
        for (const auto& w : meta.at("warnings"))
            if (w.is_string())
                c.warnings.push_back(w.get<std::string>());

    if (doc.contains("omega0"))
        c.omega0 = number_at(doc.at("omega0"), "omega0");
    if (doc.contains("eps")) {
        const auto& e = doc.at("eps");
        c.eps.e1 = number_at(require(e, "e1", "eps"), "eps.e1");
        c.eps.e2 = number_at(require(e, "e2", "eps"), "eps.e2");
        c.eps.e3 = number_at(require(e, "e3", "eps"), "eps.e3");
    }

    const auto& buses = require(doc, "buses", "");
    if (!buses.is_array())
        throw InputError("buses: expected an array");
    std::map<int, std::size_t> seen;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        Bus b = parse_bus(buses[i], i);
        if (!seen.emplace(b.id, i).second)
            throw InputError(bus_path(i) + ".id: duplicate bus id " + std::to_string(b.id));
        c.buses.push_back(b);
    }

    const auto& lines = require(doc, "lines", "");
    if (!lines.is_array())
        throw InputError("lines: expected an array");
    for (std::size_t j = 0; j < lines.size(); ++j) {
        const auto path = "lines[" + std::to_string(j) + "]";
        const auto& jl = lines[j];
        Line ln;
        ln.from = integer_at(require(jl, "from", path), path + ".from") - 1;
        ln.to = integer_at(require(jl, "to", path), path + ".to") - 1;
        ln.r = number_at(require(jl, "r", path), path + ".r");
        ln.x = number_at(require(jl, "x", path), path + ".x");
        c.lines.push_back(ln);
    }

    validate_case(c);
    return c;
}

Case load_case_file(const std::string& path) { return parse_case(read_text_file(path)); }

std::string serialize_case(const Case& c)
{
    json doc;
    doc["meta"]["name"] = c.name;
    if (c.base_mva)
        doc["meta"]["base_mva"] = round12(*c.base_mva);
    if (!c.warnings.empty())
        doc["meta"]["warnings"] = c.warnings;
    doc["omega0"] = round12(c.omega0);
    doc["eps"] = {{"e1", round12(c.eps.e1)}, {"e2", round12(c.eps.e2)}, {"e3", round12(c.eps.e3)}};
    doc["buses"] = json::array();
    for (const auto& b : c.buses)
        doc["buses"].push_back(bus_to_json(b));
    doc["lines"] = json::array();
    for (const auto& ln : c.lines)
        doc["lines"].push_back({{"from", ln.from + 1}, {"to", ln.to + 1}, {"r", round12(ln.r)}, {"x", round12(ln.x)}});
    return doc.dump(2) + "\n";
}

Case builtin_case(std::string_view name)
{
    if (name != kIeee9Name)
        throw InputError("unknown builtin case '" + std::string(name) + "' (available: " + std::string(kIeee9Name) + ")");

    Case c;
    c.name = std::string(kIeee9Name);
    c.base_mva = 100.0;

    auto inverter = [](int id, std::optional<double> p0) {
        Bus b;
        b.id = id;
        b.kind = BusKind::inverter;
        b.p0_net = p0;
        b.d1 = 5.0;
        b.d2 = 10.0;
        b.t1 = 0.01;
        b.t2 = 10.0;
        b.v0 = 1.0;
        return b;
    };
    auto load = [](int id, double p0, double q0) {
        Bus b;
        b.id = id;
        b.kind = BusKind::load;
        b.p0_net = p0;
        b.q0_net = q0;
        return b;
    };
    // Bus 1 active and all inverter reactive references are blank in the
    // published table; they are back-solved from the bundled operating point.
    // Buses 7 and 9 use -0.04 / -0.06 for the reactive load, the values
    // consistent with that operating point.
    c.buses = {inverter(1, std::nullopt), inverter(2, 0.3260),     inverter(3, 0.1700),
               load(4, 0.0, 0.0),         load(5, -0.18, -0.12),    load(6, 0.0, 0.0),
               load(7, -0.2, -0.04),      load(8, 0.0, 0.0),        load(9, -0.25, -0.06)};
    c.lines = {{0, 3, 0.0387, 0.0576}, {3, 4, 0.0648, 0.0920}, {2, 5, 0.0412, 0.0586}, {5, 6, 0.0703, 0.1008},
               {6, 7, 0.0517, 0.0720}, {7, 1, 0.0433, 0.0625}, {7, 8, 0.1100, 0.1610}, {8, 3, 0.0600, 0.0850}};
    validate_case(c);
    return c;
}

ReferenceState builtin_reference_state(std::string_view name)
{
    if (name != kIeee9Name)
        throw InputError("no reference state bundled for '" + std::string(name) + "'");
    ReferenceState s;
    s.v.resize(9);
    s.theta.resize(9);
    s.v << 1.0, 1.0, 1.0, 0.9780, 0.9542, 0.9932, 0.9818, 0.9869, 0.9673;
    const double theta_deg[] = {0.0, 5.1802, 5.5607, 0.0791, -0.4604, 4.9809, 3.9652, 3.9639, 0.7374};
    for (int i = 0; i < 9; ++i)
        s.theta(i) = deg2rad(theta_deg[i]);
    return s;
}

Case resolve_case(const std::string& name_or_path)
{
    if (name_or_path == kIeee9Name || name_or_path == "ieee9")
        return builtin_case(kIeee9Name);
    if (!std::filesystem::exists(name_or_path))
        throw InputError("'" + name_or_path + "' is neither a builtin case nor an existing file");
    return load_case_file(name_or_path);
}

Case gen_lossy_variant(const Case& base, double rx_mean, double rx_std, std::uint64_t seed)
{
    if (!(rx_mean > 0.0))
        throw InputError("rx_mean must be positive");
    if (!(rx_std >= 0.0))
        throw InputError("rx_std must be non-negative");

    Case out = base;
    out.warnings.clear();
    out.name = base.name + "-rx" + format_number(rx_mean) + "-sd" + format_number(rx_std) + "-seed"
        + std::to_string(seed);
    if (rx_std > 0.0) {
        const double p_trunc = normal_cdf(-rx_mean / rx_std);
        if (p_trunc > 0.01)
            out.warnings.push_back("R/X draws truncated at r > 0 with probability " + format_number(p_trunc));
    }
    Rng rng(seed);
    for (auto& ln : out.lines) {
        double ratio = rx_mean;
        if (rx_std > 0.0) {
            do {
                ratio = rng.normal(rx_mean, rx_std);
            } while (!(ratio > 0.0));
        }
        ln.r = ln.x * ratio;
    }
    return out;
}

std::string case_hash(const Case& c)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : serialize_case(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace droopgrid
