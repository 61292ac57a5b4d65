#include "mixrom/qoi.hpp"

#include "mixrom/error.hpp"
#include "mixrom/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mixrom::qoi {

namespace {

constexpr std::array<Species, 3> kSpecies{Species::kA, Species::kB, Species::kC};

// Divides by the maximum; returns true when the series had to be zeroed.
bool normalize(std::vector<double>& s, double zero_threshold) {
    const double peak = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
    if (!(peak > zero_threshold)) {
        std::fill(s.begin(), s.end(), 0.0);
        return true;
    }
    for (double& v : s) {
        v = std::clamp(v / peak, 0.0, 1.0);
    }
    return false;
}

const Vector& field_of(const physics::SpeciesFields& f, Species s) {
    switch (s) {
        case Species::kA: return f.a;
        case Species::kB: return f.b;
        default: return f.c;
    }
}

}  // namespace

RawMoments raw_moments(const SparseMatrix& mass, const Vector& c) {
    if (mass.rows() != c.size()) {
        throw InvalidArgument("raw_moments: field size does not match the mass matrix");
    }
    const Vector mc = mass * c;
    // SparseMatrix::sum() vectorizes over the value array from whatever
    // alignment the allocator gave it, so its rounding is address dependent.
    double area = 0.0;
    for (Eigen::Index j = 0; j < mass.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(mass, j); it; ++it) {
            area += it.value();
        }
    }
    RawMoments m;
    m.mean = mc.sum();
    m.mean_sq = c.dot(mc);
    m.variance = m.mean_sq - m.mean * m.mean / area;
    return m;
}

std::array<QoISeries, 3> compute_qois(const std::string& sim_id, const std::vector<double>& times,
                                      const std::vector<physics::SpeciesFields>& species, const SparseMatrix& mass) {
    if (times.size() < 2) {
        throw InvalidArgument("compute_qois: need at least two snapshots");
    }
    if (species.size() != times.size()) {
        throw InvalidArgument("compute_qois: times and fields differ in length");
    }
    std::array<QoISeries, 3> out;
    for (std::size_t s = 0; s < kSpecies.size(); ++s) {
        QoISeries& q = out[s];
        q.sim_id = sim_id;
        q.species = kSpecies[s];
        q.times = times;
        q.avg_conc.reserve(times.size());
        q.avg_sq_conc.reserve(times.size());
        q.degree_of_mixing.reserve(times.size());
        double sq_peak = 0.0;
        for (const auto& f : species) {
            const RawMoments m = raw_moments(mass, field_of(f, kSpecies[s]));
            if (m.variance < -1e-12 * std::max(1.0, m.mean_sq)) {
                throw NumericalError("compute_qois: negative variance " + io::format_double(m.variance));
            }
            q.avg_conc.push_back(m.mean);
            q.avg_sq_conc.push_back(m.mean_sq);
            q.degree_of_mixing.push_back(std::max(m.variance, 0.0));
            sq_peak = std::max(sq_peak, m.mean_sq);
        }
        q.zero_avg_conc = normalize(q.avg_conc, 0.0);
        q.zero_avg_sq_conc = normalize(q.avg_sq_conc, 0.0);
        // Round-off in <c^2> - <c>^2 for a uniform field is not variance.
        q.zero_variance = normalize(q.degree_of_mixing, 1e-12 * sq_peak);
    }
    return out;
}

std::array<QoISeries, 3> compute_qois(const std::string& sim_id, const fem::SimulationResult& result) {
    std::vector<physics::SpeciesFields> fields;
    fields.reserve(result.num_snapshots());
    for (std::size_t k = 0; k < result.num_snapshots(); ++k) {
        if (result.steps[k] == 0) {
            fields.push_back(result.initial_species);
        } else {
            fields.push_back(physics::recover_species(result.c_f[k], result.c_g[k], result.config.stoichiometry));
        }
    }
    return compute_qois(sim_id, result.times, fields, result.mass);
}

ScalingFit fit_exponent(const std::vector<double>& series, const std::vector<double>& times, FitWindow window) {
    if (series.size() != times.size()) {
        throw InvalidArgument("fit_exponent: series and times differ in length");
    }
    if (!(window.t_lo <= window.t_hi)) {
        throw InvalidArgument("fit_exponent: empty window");
    }
    const double slack = 1e-9 * std::max(1.0, std::abs(window.t_hi));
    std::vector<double> ts;
    std::vector<double> ls;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (times[i] >= window.t_lo - slack && times[i] <= window.t_hi + slack && series[i] > 1e-12) {
            ts.push_back(times[i]);
            ls.push_back(std::log(series[i]));
        }
    }
    if (ts.size() < 3) {
        throw NumericalError("fit_exponent: fewer than three positive samples in the window");
    }
    const double n = static_cast<double>(ts.size());
    double t_mean = 0.0;
    double l_mean = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        t_mean += ts[i];
        l_mean += ls[i];
    }
    t_mean /= n;
    l_mean /= n;
    double stt = 0.0;
    double stl = 0.0;
    double sll = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double dt = ts[i] - t_mean;
        const double dl = ls[i] - l_mean;
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if (!(stt > 0.0)) {
        throw NumericalError("fit_exponent: all samples share one time");
    }
    ScalingFit fit;
    fit.exponent = stl / stt;
    fit.prefactor = std::exp(l_mean - fit.exponent * t_mean);
    fit.window = window;
    fit.samples = static_cast<int>(ts.size());
    const double ss_res = std::max(0.0, sll - fit.exponent * stl);
    fit.r2 = sll > 0.0 ? 1.0 - ss_res / sll : 1.0;
    return fit;
}

double envelope_floor(const std::vector<double>& sigma2, const std::vector<double>& times, double rate) {
    if (!(rate > 0.0)) {
        throw InvalidArgument("envelope_floor: rate must be positive");
    }
    double a = 0.0;
    for (std::size_t i = 0; i < sigma2.size(); ++i) {
        const double e = std::exp(-rate * times[i]);
        if (sigma2[i] <= e) {
            continue;
        }
        if (e >= 1.0) {
            return 1.0;
        }
        a = std::max(a, (sigma2[i] - e) / (1.0 - e));
    }
    return std::min(a, 1.0);
}

BoundDiagnostics check_diagnostics(const fem::SimulationResult& result, const DiagnosticsOptions& options) {
    BoundDiagnostics d;
    if (result.diagnostics.empty()) {
        return d;
    }
    const auto& first = result.diagnostics.front();
    for (std::size_t k = 0; k < result.diagnostics.size(); ++k) {
        const auto& cur = result.diagnostics[k];
        if (first.mass_f != 0.0) {
            d.mass_drift = std::max(d.mass_drift, std::abs(cur.mass_f - first.mass_f) / std::abs(first.mass_f));
        }
        if (first.mass_g != 0.0) {
            d.mass_drift = std::max(d.mass_drift, std::abs(cur.mass_g - first.mass_g) / std::abs(first.mass_g));
        }
        if (k > 0) {
            const auto& prev = result.diagnostics[k - 1];
            d.m_norm_increase = std::max({d.m_norm_increase, cur.mnorm_f - prev.mnorm_f, cur.mnorm_g - prev.mnorm_g});
        }
    }
    d.mass_ok = d.mass_drift <= options.mass_tolerance;
    d.m_norm_monotone = d.m_norm_increase <= options.monotone_tolerance;

    if (result.num_snapshots() < 2) {
        return d;
    }
    const auto series = compute_qois("", result);
    const auto& target = series[static_cast<std::size_t>(options.envelope_species)];
    try {
        const ScalingFit fit = fit_exponent(target.degree_of_mixing, target.times, options.window);
        d.envelope_b = -fit.exponent;
        if (d.envelope_b > 0.0) {
            d.envelope_a = envelope_floor(target.degree_of_mixing, target.times, d.envelope_b);
            d.envelope_m = 1.0 - d.envelope_a;
            d.envelope_ok = d.envelope_a < 1.0;
        }
    } catch (const NumericalError&) {
        d.envelope_ok = false;
    }
    return d;
}

void write_qoi_csv(const std::filesystem::path& path, const std::array<QoISeries, 3>& series) {
    std::string out = "sim_id,t,species,avg_conc,avg_sq_conc,degree_of_mixing\n";
    const std::size_t n = series[0].times.size();
    for (const auto& s : series) {
        if (s.times.size() != n || s.avg_conc.size() != n || s.avg_sq_conc.size() != n ||
            s.degree_of_mixing.size() != n) {
            throw InvalidArgument("write_qoi_csv: series lengths differ");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& s : series) {
            out += io::csv_line({s.sim_id, io::format_double(s.times[i]), physics::species_name(s.species),
                                 io::format_double(s.avg_conc[i]), io::format_double(s.avg_sq_conc[i]),
                                 io::format_double(s.degree_of_mixing[i])});
        }
    }
    io::write_text_atomic(path, out);
}

std::vector<QoISeries> read_qoi_csv(const std::filesystem::path& path) {
    const io::CsvTable table = io::read_csv(path);
    const std::size_t c_id = table.column("sim_id");
    const std::size_t c_t = table.column("t");
    const std::size_t c_s = table.column("species");
    const std::size_t c_avg = table.column("avg_conc");
    const std::size_t c_sq = table.column("avg_sq_conc");
    const std::size_t c_mix = table.column("degree_of_mixing");
    std::map<Species, QoISeries> by_species;
    for (const auto& row : table.rows) {
        const Species s = physics::parse_species(row[c_s]);
        QoISeries& q = by_species[s];
        q.sim_id = row[c_id];
        q.species = s;
        q.times.push_back(io::parse_double(row[c_t]));
        q.avg_conc.push_back(io::parse_double(row[c_avg]));
        q.avg_sq_conc.push_back(io::parse_double(row[c_sq]));
        q.degree_of_mixing.push_back(io::parse_double(row[c_mix]));
    }
    std::vector<QoISeries> out;
    for (auto& [s, q] : by_species) {
        const auto all_zero = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
        };
        q.zero_avg_conc = all_zero(q.avg_conc);
        q.zero_avg_sq_conc = all_zero(q.avg_sq_conc);
        q.zero_variance = all_zero(q.degree_of_mixing);
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace mixrom::qoi
