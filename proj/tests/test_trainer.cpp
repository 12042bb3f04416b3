#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "vacl/errors.hpp"
#include "vacl/trainer.hpp"

namespace vacl {
namespace {

TrainConfig quick_config(PenaltyKind kind = PenaltyKind::None, double lambda = 0.0, std::size_t epochs = 15) {
    TrainConfig c;
    c.penalty = PenaltySpec{kind, lambda, Partition::All, 0.0};
    c.epochs = epochs;
    c.batch_size = 16;
    c.lr.initial = 0.05;
    c.momentum = 0.9;
    c.seed = 1;
    return c;
}

/// Least-squares linear discriminant on [x, 1] with targets +-1.
double least_squares_accuracy(const Dataset& data) {
    const std::size_t d = data.dim() + 1;
    std::vector<double> a(d * d, 0.0), b(d, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<double> x(data.features.row(i).begin(), data.features.row(i).end());
        x.push_back(1.0);
        const double y = data.labels[i] == 1 ? 1.0 : -1.0;
        for (std::size_t r = 0; r < d; ++r) {
            b[r] += x[r] * y;
            for (std::size_t c = 0; c < d; ++c) a[r * d + c] += x[r] * x[c];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < d; ++r)
            if (std::abs(a[r * d + k]) > std::abs(a[piv * d + k])) piv = r;
        for (std::size_t c = 0; c < d; ++c) std::swap(a[k * d + c], a[piv * d + c]);
        std::swap(b[k], b[piv]);
        for (std::size_t r = k + 1; r < d; ++r) {
            const double f = a[r * d + k] / a[k * d + k];
            for (std::size_t c = k; c < d; ++c) a[r * d + c] -= f * a[k * d + c];
            b[r] -= f * b[k];
        }
    }
    std::vector<double> w(d);
    for (std::size_t k = d; k-- > 0;) {
        double s = b[k];
        for (std::size_t c = k + 1; c < d; ++c) s -= a[k * d + c] * w[c];
        w[k] = s / a[k * d + k];
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double s = w[d - 1];
        for (std::size_t k = 0; k + 1 < d; ++k) s += w[k] * data.features.at(i, k);
        correct += (s > 0.0) == (data.labels[i] == 1);
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TEST(Data, SyntheticIsDeterministic) {
    const Dataset a = synth_dataset(3, 4, 50, 7), b = synth_dataset(3, 4, 50, 7);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, synth_dataset(3, 4, 50, 8).features);
    const DataSplit s = synth_split(2, 2, 10, 10, 7);
    EXPECT_NE(s.train.features, s.test.features);
    EXPECT_EQ(s.test.split, Split::Test);
}

TEST(Data, SyntheticLabelsCycle) {
    const Dataset a = synth_dataset(3, 2, 7, 1);
    EXPECT_EQ(a.labels, (std::vector<int>{0, 1, 2, 0, 1, 2, 0}));
    EXPECT_EQ(a.num_classes, 3u);
    EXPECT_EQ(a.dim(), 2u);
}

TEST(Data, WellSeparatedClassesAreLinearlySeparable) {
    const Dataset a = synth_dataset(2, 2, 400, 7, 8.0);
    EXPECT_GE(least_squares_accuracy(a), 0.99);
}

TEST(Data, RejectsEmpty) {
    EXPECT_THROW(synth_dataset(2, 2, 0, 1), ConfigError);
    EXPECT_THROW(synth_dataset(0, 2, 5, 1), ConfigError);
}

class CsvTest : public ::testing::Test {
protected:
    std::filesystem::path dir = std::filesystem::temp_directory_path() /
                                ("vacl_csv_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
    void SetUp() override { std::filesystem::create_directories(dir); }
    void TearDown() override { std::filesystem::remove_all(dir); }
    std::filesystem::path write(const std::string& name, const std::string& text) {
        const auto p = dir / name;
        std::ofstream(p) << text;
        return p;
    }
};

TEST_F(CsvTest, LoadsFeaturesAndLabels) {
    const auto p = write("d.csv", "x1,x2,label\n0.5,-1,1\n2,3e-1,0\n\n");
    const Dataset d = load_csv_dataset(p, Split::Test, 2);
    EXPECT_EQ(d.features, Tensor::matrix({{0.5, -1}, {2, 0.3}}));
    EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
    EXPECT_EQ(d.split, Split::Test);
}

TEST_F(CsvTest, RejectsBadFiles) {
    EXPECT_THROW(load_csv_dataset(dir / "missing.csv", Split::Train, 2), IoError);
    EXPECT_THROW(load_csv_dataset(write("a.csv", "x,label\n1,2\n"), Split::Train, 2), IoError);
    EXPECT_THROW(load_csv_dataset(write("b.csv", "x,label\n1,0,3\n"), Split::Train, 2), IoError);
    EXPECT_THROW(load_csv_dataset(write("c.csv", "x,label\nfoo,0\n"), Split::Train, 2), IoError);
    EXPECT_THROW(load_csv_dataset(write("d.csv", "x,label\n"), Split::Train, 2), IoError);
    EXPECT_THROW(load_csv_dataset(write("e.csv", "x,label\n1,0.5\n"), Split::Train, 2), IoError);
}

TEST(Schedule, StepDecay) {
    LrSchedule s{0.1, {2, 4}, 0.5};
    EXPECT_EQ(s.at(0), 0.1);
    EXPECT_EQ(s.at(2), 0.05);
    EXPECT_EQ(s.at(5), 0.025);
}

TEST(Config, Validation) {
    TrainConfig c = quick_config();
    EXPECT_NO_THROW(c.validate());
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_NO_THROW(c.validate(true));
    c = quick_config();
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = quick_config();
    c.lr.decay_epochs = {3, 3};
    EXPECT_THROW(c.validate(), ConfigError);
    c = quick_config();
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, SeparableDataIsLearned) {
    const DataSplit data = synth_split(2, 2, 256, 256, 3, 4.0);
    const ModelGraph g = build_residual_mlp(2, {8}, {1}, 2);
    const TrainResult r = train(g, data.train, &data.test, quick_config());
    EXPECT_GE(r.metrics.final_train_accuracy, 0.95);
    ASSERT_EQ(r.metrics.epochs.size(), 15u);
    for (const auto& e : r.metrics.epochs) EXPECT_TRUE(e.test_accuracy.has_value());
    EXPECT_LT(r.metrics.epochs.back().data_loss, r.metrics.epochs.front().data_loss);
}

TEST(Train, OverwhelmingPenaltyCollapsesWeights) {
    const DataSplit data = synth_split(2, 2, 256, 256, 3, 4.0);
    const ModelGraph g = build_residual_mlp(2, {8}, {1}, 2);
    TrainConfig c = quick_config(PenaltyKind::L2, 1e3, 10);
    c.lr.initial = 1e-4;
    c.momentum = 0.0;
    const TrainResult r = train(g, data.train, &data.test, c);
    double largest = 0.0;
    for (const auto& [name, t] : r.params)
        for (double v : t.data()) largest = std::max(largest, std::abs(v));
    EXPECT_LT(largest, 1e-4);
    EXPECT_NEAR(r.metrics.final_test_accuracy.value(), 0.5, 0.05);
}

TEST(Train, SameSeedSameWeights) {
    const DataSplit data = synth_split(2, 2, 128, 64, 3, 2.0);
    const ModelGraph g = build_residual_mlp(2, {6, 4}, {1, 1}, 2);
    const TrainConfig c = quick_config(PenaltyKind::VACL, 1e-3, 4);
    const TrainResult a = train(g, data.train, &data.test, c);
    const TrainResult b = train(g, data.train, &data.test, c);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.metrics.to_json().dump(), b.metrics.to_json().dump());
    TrainConfig other = c;
    other.seed = 2;
    EXPECT_NE(train(g, data.train, &data.test, other).params, a.params);
}

TEST(Train, DivergenceIsANumericError) {
    const DataSplit data = synth_split(2, 2, 64, 16, 3, 2.0);
    const ModelGraph g = build_residual_mlp(2, {4}, {1}, 2);
    TrainConfig c = quick_config();
    c.lr.initial = 1e200;
    EXPECT_THROW(train(g, data.train, nullptr, c), NumericError);
}

TEST(Train, RejectsMismatchedData) {
    const DataSplit data = synth_split(2, 3, 16, 16, 3, 2.0);
    const ModelGraph g = build_residual_mlp(2, {4}, {1}, 2);
    EXPECT_THROW(train(g, data.train, nullptr, quick_config()), DimensionError);
}

TEST(Finetune, ZeroEpochsLeavesParamsUnchanged) {
    const DataSplit data = synth_split(2, 2, 64, 16, 3, 2.0);
    const ModelGraph g = build_residual_mlp(2, {4}, {1}, 2);
    const ParamMap p = init_params(g, 9);
    TrainConfig c = quick_config();
    c.epochs = 0;
    EXPECT_EQ(finetune(g, p, data.train, &data.test, c).params, p);
}

TEST(Stage, OverWideModelShrinksUnderVacl) {
    const DataSplit data = synth_split(2, 2, 256, 256, 5, 2.0);
    const ModelGraph g = build_residual_mlp(2, {64}, {1}, 2);
    TrainConfig c = quick_config(PenaltyKind::VACL, 1e-3, 20);
    c.lr.decay_epochs = {10, 15};
    c.penalty.head_l2 = 1e-4;
    const StageResult s = train_prune_stage(g, init_params(g, 3), data.train, data.test, c, kDefaultTau);
    EXPECT_LT(s.report.params, g.param_count());
    EXPECT_EQ(s.report.params, s.graph.param_count());
    EXPECT_EQ(s.report.prune.params_after, s.report.params);
    EXPECT_EQ(s.report.prune.params_before, g.param_count());
    EXPECT_GT(s.report.accuracy_after_prune, 0.8);
}

TEST(Stage, FinetuneAfterExactPruningRecovers) {
    const DataSplit data = synth_split(2, 2, 256, 256, 5, 2.0);
    const ModelGraph g = build_residual_mlp(2, {32}, {1}, 2);
    TrainConfig c = quick_config(PenaltyKind::VACL, 1e-3, 20);
    c.lr.decay_epochs = {10, 15};
    const StageResult s = train_prune_stage(g, init_params(g, 3), data.train, data.test, c, kDefaultTau);
    TrainConfig ft = quick_config(PenaltyKind::None, 0.0, 5);
    ft.lr.initial = 0.01;
    const TrainResult tuned = finetune(s.graph, s.params, data.train, &data.test, ft);
    EXPECT_GE(tuned.metrics.final_test_accuracy.value(), s.report.accuracy_before_prune - 0.01);
}

TEST(Pipeline, SingleStageEqualsStageThenFinetune) {
    const DataSplit data = synth_split(2, 2, 128, 64, 5, 2.0);
    const ModelGraph g = build_residual_mlp(2, {8}, {1}, 2);
    const TrainConfig c = quick_config(PenaltyKind::CLGL, 1e-3, 5);
    PipelineOptions opts;
    opts.finetune = quick_config(PenaltyKind::None, 0.0, 2);
    const PipelineResult p = run_pipeline(g, init_params(g, 1), data.train, data.test, {c}, opts);

    const StageResult s = train_prune_stage(g, init_params(g, 1), data.train, data.test, c, opts.tau);
    TrainConfig ft = opts.finetune;
    ft.seed = c.seed + 7919;
    const TrainResult t = finetune(s.graph, s.params, data.train, &data.test, ft, opts.final);
    EXPECT_EQ(p.params, t.params);
    ASSERT_EQ(p.reports.size(), 1u);
    EXPECT_EQ(p.reports[0].accuracy_after_finetune, t.metrics.final_test_accuracy);
}

TEST(Pipeline, ParamsNeverGrowAcrossStages) {
    const DataSplit data = synth_split(2, 2, 128, 64, 5, 2.0);
    const ModelGraph g = build_residual_mlp(2, {16}, {1}, 2);
    std::vector<TrainConfig> stages = {quick_config(PenaltyKind::L1, 1e-3, 5), quick_config(PenaltyKind::L1, 1e-3, 5),
                                       quick_config(PenaltyKind::VACL, 1e-3, 5)};
    PipelineOptions opts;
    opts.finetune = quick_config(PenaltyKind::None, 0.0, 1);
    const PipelineResult p = run_pipeline(g, init_params(g, 1), data.train, data.test, stages, opts);
    ASSERT_EQ(p.reports.size(), 3u);
    for (std::size_t s = 1; s < 3; ++s) EXPECT_LE(p.reports[s].params, p.reports[s - 1].params);
    EXPECT_EQ(p.to_json().at("final_params"), p.reports.back().params);
    EXPECT_THROW(run_pipeline(g, init_params(g, 1), data.train, data.test, {}, opts), ConfigError);
}

}  // namespace
}  // namespace vacl
