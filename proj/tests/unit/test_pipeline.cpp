#include "mixrom/error.hpp"
#include "mixrom/pipeline.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace mixrom;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

pipeline::SweepSpec small_spec() {
    pipeline::SweepSpec s;
    s.v0 = {1.0, 1e-2};
    s.aniso_ratio = {1.0, 1e2};
    s.d_m = {1e-3};
    s.kappa_fl = {2.0};
    s.period_t = {1e-4};
    s.base.nodes_per_side = 11;
    s.base.dt = 0.02;
    s.base.end_time = 1.0;
    return s;
}

class PipelineTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "mixrom_pipeline_test";
        fs::remove_all(root_);
        summary_ = pipeline::run_sweep(small_spec(), root_ / "sweep", 1);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static fs::path root_;
    static pipeline::SweepSummary summary_;
};

fs::path PipelineTest::root_;
pipeline::SweepSummary PipelineTest::summary_;

}  // namespace

TEST(Sweep, EnumerationOrderAndIds) {
    const auto pts = pipeline::enumerate_sweep(pipeline::desk_sweep_spec());
    ASSERT_EQ(pts.size(), 72u);
    EXPECT_DOUBLE_EQ(pts.front().params.v0, 1.0);
    EXPECT_DOUBLE_EQ(pts[1].params.period_t, 5e-4);
    EXPECT_DOUBLE_EQ(pts.back().params.v0, 1e-4);
    std::set<std::string> ids;
    for (const auto& p : pts) {
        ids.insert(p.sim_id);
    }
    EXPECT_EQ(ids.size(), 72u);
    EXPECT_EQ(pts[5].sim_id.rfind("sim_0005_", 0), 0u);
}

TEST(Sweep, SpecJsonRoundTripAndValidation) {
    const auto spec = small_spec();
    const auto back = pipeline::sweep_spec_from_json(pipeline::to_json(spec));
    EXPECT_EQ(back.v0, spec.v0);
    EXPECT_EQ(back.aniso_ratio, spec.aniso_ratio);
    EXPECT_EQ(back.base.nodes_per_side, 11);
    auto bad = spec;
    bad.aniso_ratio = {0.5};
    EXPECT_THROW(bad.validate(), InvalidArgument);
    bad = spec;
    bad.v0.clear();
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Sweep, ApplySetsTransverseDispersivity) {
    physics::SimulationConfig base;
    pipeline::SweepParameters p;
    p.aniso_ratio = 1e4;
    const auto c = pipeline::apply(base, p);
    EXPECT_DOUBLE_EQ(c.dispersion.alpha_t, base.dispersion.alpha_l / 1e4);
    const auto f = pipeline::parameter_features(p);
    EXPECT_DOUBLE_EQ(f[1], 4.0);
    EXPECT_DOUBLE_EQ(f[3], -1.0);
}

TEST_F(PipelineTest, SweepWritesEveryRunAndIsReproducible) {
    EXPECT_EQ(summary_.runs, 4u);
    EXPECT_EQ(summary_.succeeded, 4u);
    EXPECT_TRUE(summary_.failures.empty());
    const auto pts = pipeline::enumerate_sweep(small_spec());
    for (const auto& p : pts) {
        EXPECT_TRUE(fs::exists(root_ / "sweep" / "sims" / (p.sim_id + ".qoi.csv")));
        EXPECT_TRUE(fs::exists(root_ / "sweep" / "sims" / (p.sim_id + ".config.json")));
    }
    (void)pipeline::run_sweep(small_spec(), root_ / "again", 2);
    for (const char* f : {"manifest.csv", "sweep.json", "failures.csv"}) {
        EXPECT_EQ(slurp(root_ / "sweep" / f), slurp(root_ / "again" / f)) << f;
    }
    for (const auto& p : pts) {
        const fs::path rel = fs::path("sims") / (p.sim_id + ".qoi.csv");
        EXPECT_EQ(slurp(root_ / "sweep" / rel), slurp(root_ / "again" / rel));
    }
}

TEST_F(PipelineTest, DatasetShapeAndScaling) {
    const auto sims = pipeline::load_sweep(root_ / "sweep");
    ASSERT_EQ(sims.size(), 4u);
    const auto d = pipeline::build_dataset(sims, "degree_of_mixing", physics::Species::kA);
    EXPECT_EQ(d.rows(), 4u * 50u);
    EXPECT_EQ(d.scaled.scaled.cols(), 6);
    EXPECT_GE(d.scaled.scaled.minCoeff(), 0.0);
    EXPECT_LE(d.scaled.scaled.maxCoeff(), 1.0);
    EXPECT_GE(d.values.minCoeff(), 0.0);
    EXPECT_LE(d.values.maxCoeff(), 1.0);
    EXPECT_THROW((void)pipeline::build_dataset(sims, "entropy", physics::Species::kA), InvalidArgument);
    pipeline::write_dataset_csv(root_ / "ds.csv", d);
    EXPECT_TRUE(fs::exists(root_ / "ds.scaling.json"));
}

TEST(Split, DisjointAndDeterministic) {
    for (double frac : {0.01, 0.05, 0.3}) {
        const auto s = pipeline::split_simulations(72, frac, 7);
        EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::max(1L, std::lround(frac * 72))));
        EXPECT_EQ(s.train.size() + s.test.size(), 72u);
        std::set<std::size_t> all(s.train.begin(), s.train.end());
        all.insert(s.test.begin(), s.test.end());
        EXPECT_EQ(all.size(), 72u);
        EXPECT_EQ(pipeline::split_simulations(72, frac, 7).train, s.train);
    }
    EXPECT_THROW((void)pipeline::split_simulations(1, 0.5, 1), InvalidArgument);
}

TEST_F(PipelineTest, SanityTrainingFitsAndPredicts) {
    pipeline::ExperimentProtocol p;
    p.dataset = root_ / "sweep";
    p.out = root_ / "train";
    p.train_fractions = {0.5};
    p.grid = {{1000.0, 10.0, 1e-3}};
    p.sanity = true;
    p.train_svm = false;
    p.seed = 3;
    const auto report = pipeline::train_protocol(p);
    ASSERT_EQ(report.fractions.size(), 1u);
    EXPECT_GE(report.fractions[0].svr_ensemble_r2, 0.99);
    EXPECT_TRUE(fs::exists(root_ / "train" / "report.json"));

    const auto paths = pipeline::expand_glob((root_ / "train" / "models" / "*" / "svr_*.json").string());
    ASSERT_EQ(paths.size(), 1u);
    std::vector<ml::SvrModel> models{ml::load_svr(paths[0])};
    models.push_back(models[0]);
    const auto table = pipeline::predict_series(models, {}, 0.0, 1.0, 11);
    ASSERT_EQ(table.times.size(), 11u);
    for (Eigen::Index i = 0; i < 11; ++i) {
        EXPECT_LE(table.band.lo[i], table.band.mean[i]);
        EXPECT_LE(table.band.mean[i], table.band.hi[i]);
        EXPECT_GE(table.band.lo[i], 0.0);
        EXPECT_LE(table.band.hi[i], 1.0);
    }
}

TEST_F(PipelineTest, ExponentsAndClusters) {
    const auto sims = pipeline::load_sweep(root_ / "sweep");
    const auto rows = pipeline::exponent_table(sims);
    EXPECT_EQ(rows.size(), sims.size() * 3);
    const auto c = pipeline::cluster_exponents(rows, physics::Species::kA, 2, 1);
    std::set<int> labels(c.clusters.assignments.begin(), c.clusters.assignments.end());
    EXPECT_EQ(labels.size(), 2u);
    pipeline::ReportOptions o;
    o.dataset = root_ / "sweep";
    o.out = root_ / "report";
    o.k = 2;
    o.svg = true;
    const auto written = pipeline::write_report(o);
    for (const char* f : {"exponents.csv", "exponent_clusters.csv", "importance_random_forest.csv", "qoi_mean.svg"}) {
        EXPECT_TRUE(fs::exists(root_ / "report" / f)) << f;
    }
    EXPECT_FALSE(written.empty());
}
