#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/pipeline.hpp"
#include "mixrom/random.hpp"
#include "mixrom/simulation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <thread>

namespace mixrom::pipeline {

namespace {

std::vector<double> list_or(const nlohmann::json& j, const char* key, const std::vector<double>& fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    return j.at(key).get<std::vector<double>>();
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') {
            c = c == ',' ? ';' : ' ';
        }
    }
    return s;
}

fs::path qoi_path(const fs::path& dir, const std::string& id) { return dir / "sims" / (id + ".qoi.csv"); }

}  // namespace

physics::SimulationConfig apply(const physics::SimulationConfig& base, const SweepParameters& p) {
    physics::SimulationConfig cfg = base;
    cfg.velocity.v0 = p.v0;
    cfg.velocity.kappa_f_l = p.kappa_fl;
    cfg.velocity.period_t = p.period_t;
    cfg.dispersion.alpha_t = cfg.dispersion.alpha_l / p.aniso_ratio;
    cfg.dispersion.d_m = p.d_m;
    return cfg;
}

std::vector<double> parameter_features(const SweepParameters& p) {
    return {p.period_t, std::log10(p.aniso_ratio), p.kappa_fl, std::log10(p.v0), p.d_m};
}

std::size_t SweepSpec::size() const noexcept {
    return v0.size() * aniso_ratio.size() * d_m.size() * kappa_fl.size() * period_t.size();
}

void SweepSpec::validate() const {
    const auto positive = [](const std::vector<double>& v, const char* name) {
        if (v.empty()) {
            throw InvalidArgument(std::string("sweep spec: empty list for ") + name);
        }
        for (double x : v) {
            if (!(x > 0.0) || !std::isfinite(x)) {
                throw InvalidArgument(std::string("sweep spec: ") + name + " values must be positive");
            }
        }
    };
    positive(v0, "v0");
    positive(aniso_ratio, "aniso_ratio");
    for (double r : aniso_ratio) {
        if (r < 1.0) {
            throw InvalidArgument("sweep spec: aniso_ratio below 1 would make alpha_T exceed alpha_L");
        }
    }
    positive(d_m, "D_m");
    positive(kappa_fl, "kappa_fL");
    positive(period_t, "period_T");
    base.validate();
}

SweepSpec desk_sweep_spec() {
    SweepSpec s;
    s.v0 = {1.0, 1e-2, 1e-4};
    s.aniso_ratio = {1.0, 1e2, 1e4};
    s.d_m = {1e-3, 1e-2};
    s.kappa_fl = {2.0, 5.0};
    s.period_t = {1e-4, 5e-4};
    return s;
}

SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
    const SweepSpec desk = desk_sweep_spec();
    SweepSpec s;
    try {
        s.v0 = list_or(j, "v0", desk.v0);
        s.aniso_ratio = list_or(j, "aniso_ratio", desk.aniso_ratio);
        s.d_m = list_or(j, "D_m", desk.d_m);
        s.kappa_fl = list_or(j, "kappa_fL", desk.kappa_fl);
        s.period_t = list_or(j, "period_T", desk.period_t);
        if (j.contains("base")) {
            s.base = physics::config_from_json(j.at("base"));
        }
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("sweep spec: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const SweepSpec& spec) {
    return {{"v0", spec.v0},       {"aniso_ratio", spec.aniso_ratio},       {"D_m", spec.d_m},
            {"kappa_fL", spec.kappa_fl}, {"period_T", spec.period_t}, {"base", physics::to_json(spec.base)},
            {"seed", spec.seed}};
}

std::vector<SweepPoint> enumerate_sweep(const SweepSpec& spec) {
    std::vector<SweepPoint> out;
    out.reserve(spec.size());
    for (double v0 : spec.v0) {
        for (double ratio : spec.aniso_ratio) {
            for (double dm : spec.d_m) {
                for (double kappa : spec.kappa_fl) {
                    for (double period : spec.period_t) {
                        SweepPoint p;
                        p.params = {v0, ratio, dm, kappa, period};
                        const std::string key = io::csv_line({io::format_double(v0), io::format_double(ratio),
                                                              io::format_double(dm), io::format_double(kappa),
                                                              io::format_double(period)});
                        char id[64];
                        std::snprintf(id, sizeof(id), "sim_%04zu_%08llx", out.size(),
                                      static_cast<unsigned long long>(fnv1a(key) & 0xffffffffULL));
                        p.sim_id = id;
                        out.push_back(std::move(p));
                    }
                }
            }
        }
    }
    return out;
}

SweepSummary run_sweep(const SweepSpec& spec, const fs::path& out_dir, int workers, std::ostream* log) {
    spec.validate();
    if (workers < 1) {
        throw InvalidArgument("run_sweep: workers must be >= 1");
    }
    const std::vector<SweepPoint> points = enumerate_sweep(spec);
    io::write_text_atomic(out_dir / "sweep.json", to_json(spec).dump(2) + "\n");

    std::vector<std::string> errors(points.size());
    std::vector<char> ok(points.size(), 0);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto work = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            const SweepPoint& p = points[i];
            try {
                const physics::SimulationConfig cfg = apply(spec.base, p.params);
                const fem::SimulationResult result = fem::run_simulation(cfg);
                const auto series = qoi::compute_qois(p.sim_id, result);
                qoi::write_qoi_csv(qoi_path(out_dir, p.sim_id), series);
                io::write_text_atomic(out_dir / "sims" / (p.sim_id + ".config.json"),
                                      physics::to_json(cfg).dump(2) + "\n");
                ok[i] = 1;
            } catch (const std::exception& e) {
                errors[i] = one_line(e.what());
            }
            if (log != nullptr) {
                const std::lock_guard<std::mutex> lock(log_mutex);
                *log << p.sim_id << (ok[i] ? " ok" : " FAILED: " + errors[i]) << '\n';
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(points.size(), 1)));
    for (int t = 1; t < n_threads; ++t) {
        pool.emplace_back(work);
    }
    work();
    for (auto& th : pool) {
        th.join();
    }

    SweepSummary summary;
    summary.runs = points.size();
    std::string manifest = "sim_id,v0,aniso_ratio,D_m,kappa_fL,period_T,status\n";
    std::string failures = "sim_id,error\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        manifest += io::csv_line({p.sim_id, io::format_double(p.params.v0), io::format_double(p.params.aniso_ratio),
                                  io::format_double(p.params.d_m), io::format_double(p.params.kappa_fl),
                                  io::format_double(p.params.period_t), ok[i] ? "ok" : "failed"});
        if (ok[i]) {
            ++summary.succeeded;
        } else {
            failures += io::csv_line({p.sim_id, errors[i]});
            summary.failures.push_back({p.sim_id, errors[i]});
        }
    }
    io::write_text_atomic(out_dir / "manifest.csv", manifest);
    io::write_text_atomic(out_dir / "failures.csv", failures);
    return summary;
}

std::vector<SimRecord> load_sweep(const fs::path& dir, std::vector<std::string>* warnings) {
    const io::CsvTable manifest = io::read_csv(dir / "manifest.csv");
    const std::size_t c_id = manifest.column("sim_id");
    const std::size_t c_v0 = manifest.column("v0");
    const std::size_t c_ratio = manifest.column("aniso_ratio");
    const std::size_t c_dm = manifest.column("D_m");
    const std::size_t c_kappa = manifest.column("kappa_fL");
    const std::size_t c_period = manifest.column("period_T");
    const std::size_t c_status = manifest.column("status");
    std::vector<SimRecord> out;
    for (const auto& row : manifest.rows) {
        if (row[c_status] != "ok") {
            continue;
        }
        SimRecord rec;
        rec.sim_id = row[c_id];
        rec.params = {io::parse_double(row[c_v0]), io::parse_double(row[c_ratio]), io::parse_double(row[c_dm]),
                      io::parse_double(row[c_kappa]), io::parse_double(row[c_period])};
        const fs::path path = qoi_path(dir, rec.sim_id);
        if (!fs::exists(path)) {
            if (warnings != nullptr) {
                warnings->push_back("missing QoI file for " + rec.sim_id + ", skipped");
            }
            continue;
        }
        rec.series = qoi::read_qoi_csv(path);
        if (rec.series.size() != 3) {
            throw IoError(path.string() + ": expected species A, B and C");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void validate_qoi_name(const std::string& name) {
    if (name != "avg_conc" && name != "avg_sq_conc" && name != "degree_of_mixing") {
        throw InvalidArgument("unknown QoI '" + name + "' (expected avg_conc, avg_sq_conc or degree_of_mixing)");
    }
}

const std::vector<double>& qoi_column(const qoi::QoISeries& s, const std::string& name) {
    validate_qoi_name(name);
    if (name == "avg_conc") {
        return s.avg_conc;
    }
    if (name == "avg_sq_conc") {
        return s.avg_sq_conc;
    }
    return s.degree_of_mixing;
}

Dataset build_dataset(const std::vector<SimRecord>& sims, const std::string& target, physics::Species species) {
    validate_qoi_name(target);
    const auto sp = static_cast<std::size_t>(species);
    if (sp > 2) {
        throw InvalidArgument("build_dataset: species must be A, B or C");
    }
    Dataset d;
    d.target = target;
    d.species = species;
    std::size_t n_rows = 0;
    for (const auto& s : sims) {
        n_rows += s.series[sp].times.size() - 1;
    }
    if (n_rows == 0) {
        throw InvalidArgument("build_dataset: no rows");
    }
    d.raw.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(features::kFeatureNames.size()));
    d.values.resize(static_cast<Eigen::Index>(n_rows));
    d.sigma2.resize(static_cast<Eigen::Index>(n_rows));
    Eigen::Index r = 0;
    for (const auto& s : sims) {
        const qoi::QoISeries& q = s.series[sp];
        const std::vector<double> params = parameter_features(s.params);
        const std::vector<double>& y = qoi_column(q, target);
        d.sim_ids.push_back(s.sim_id);
        for (std::size_t t = 1; t < q.times.size(); ++t, ++r) {
            for (std::size_t c = 0; c < params.size(); ++c) {
                d.raw(r, static_cast<Eigen::Index>(c)) = params[c];
            }
            d.raw(r, static_cast<Eigen::Index>(params.size())) = q.times[t];
            d.values[r] = y[t];
            d.sigma2[r] = q.degree_of_mixing[t];
            d.row_sim.push_back(static_cast<int>(d.sim_ids.size()) - 1);
        }
    }
    d.scaled = features::minmax_scale(d.raw);
    return d;
}

Dataset build_dataset(const fs::path& dir, const std::string& target, physics::Species species) {
    std::vector<std::string> warnings;
    std::vector<SimRecord> sims = load_sweep(dir, &warnings);
    Dataset d = build_dataset(sims, target, species);
    d.warnings = std::move(warnings);
    return d;
}

void write_dataset_csv(const fs::path& path, const Dataset& data) {
    std::vector<std::string> header{"sim_id"};
    header.insert(header.end(), features::kFeatureNames.begin(), features::kFeatureNames.end());
    header.push_back(data.target);
    std::string out = io::csv_line(header);
    const Matrix& x = data.scaled.scaled;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::vector<std::string> fields{data.sim_ids[static_cast<std::size_t>(data.row_sim[static_cast<std::size_t>(r)])]};
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            fields.push_back(io::format_double(x(r, c)));
        }
        fields.push_back(io::format_double(data.values[r]));
        out += io::csv_line(fields);
    }
    io::write_text_atomic(path, out);
    nlohmann::json meta = {{"features", features::kFeatureNames},
                           {"mins", data.scaled.scaling.mins},
                           {"maxs", data.scaled.scaling.maxs},
                           {"target", data.target},
                           {"species", physics::species_name(data.species)},
                           {"rows", data.rows()},
                           {"simulations", data.sim_ids.size()}};
    fs::path sidecar = path;
    sidecar.replace_extension(".scaling.json");
    io::write_text_atomic(sidecar, meta.dump(2) + "\n");
}

}  // namespace mixrom::pipeline
