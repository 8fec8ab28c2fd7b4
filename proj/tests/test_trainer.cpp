#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "graphsight/diagnostics.hpp"
#include "graphsight/trainer.hpp"

using namespace graphsight;

namespace {

// `subjects` subjects with `copies` graphs each; labels alternate by subject.
graph_dataset toy_dataset(std::size_t subjects, std::size_t copies, std::uint64_t seed, double signal) {
    rng r(seed);
    graph_dataset ds;
    ds.meta.node_dim = 10;
    for (std::size_t s = 0; s < subjects; ++s)
        for (std::size_t c = 0; c < copies; ++c) {
            const int label = static_cast<int>(s % 2);
            brain_graph g = random_graph(r, 5, 10, 3, label);
            g.subject_id = "s" + std::to_string(s);
            for (std::size_t i = 0; i < 5; ++i) g.nodes(i, 1) += label ? signal : -signal;
            ds.graphs.push_back(g);
        }
    return ds;
}

gnn_model constant_model(double logit0, double logit1) {
    model_config c;
    gnn_model m = init_model(c, 0);
    m.head.w2 = tensor(c.head_hidden, 2, 0.0);
    m.head.b2 = tensor::row_vector({logit0, logit1});
    return m;
}

}  // namespace

TEST(Schedule, StepDecay) {
    const train_config c;
    EXPECT_DOUBLE_EQ(lr_schedule(c, 0), 0.001);
    EXPECT_DOUBLE_EQ(lr_schedule(c, 49), 0.001);
    EXPECT_DOUBLE_EQ(lr_schedule(c, 50), 0.0001);
    EXPECT_NEAR(lr_schedule(c, 250), 1e-8, 1e-22);
    for (std::size_t e = 1; e < 300; ++e) {
        EXPECT_LE(lr_schedule(c, e), lr_schedule(c, e - 1));
        if (e % 50 != 0) EXPECT_EQ(lr_schedule(c, e), lr_schedule(c, e - 1));
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    adam_state s;
    tensor theta = tensor::scalar(0.0);
    std::vector<tensor*> ps{&theta};
    std::vector<tensor> gs{tensor::scalar(1.0)};
    ASSERT_TRUE(adam_step(s, ps, gs, 0.001));
    // Bias-corrected moments are g and g², so the step is lr·g/(|g| + eps).
    EXPECT_DOUBLE_EQ(theta.item(), -0.001 / (1.0 + 1e-8));
    EXPECT_NEAR(theta.item(), -0.001, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    adam_state s;
    tensor theta = tensor::row_vector({0.3, -2.0});
    const tensor before = theta;
    std::vector<tensor*> ps{&theta};
    std::vector<tensor> gs{tensor(1, 2, 0.0)};
    ASSERT_TRUE(adam_step(s, ps, gs, 0.001));
    EXPECT_EQ(theta, before);
}

TEST(Adam, NonFiniteGradientIsRejected) {
    adam_state s;
    tensor theta = tensor::scalar(1.0);
    std::vector<tensor*> ps{&theta};
    std::vector<tensor> gs{tensor::scalar(std::numeric_limits<double>::quiet_NaN())};
    EXPECT_FALSE(adam_step(s, ps, gs, 0.001));
    EXPECT_EQ(theta.item(), 1.0);
    EXPECT_EQ(s.step, 0u);
}

TEST(Metrics, AllCorrect) {
    const std::vector<int> y{0, 1, 1, 0};
    const metrics m = compute_metrics(y, y);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.f_score, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
}

TEST(Metrics, AlwaysPositiveOnBalancedSet) {
    const std::vector<int> y{0, 1, 0, 1}, p{1, 1, 1, 1};
    const metrics m = compute_metrics(y, p);
    EXPECT_NEAR(m.accuracy, 0.5, 1e-12);
    EXPECT_NEAR(m.recall, 1.0, 1e-12);
    EXPECT_NEAR(m.precision, 0.5, 1e-12);
    EXPECT_NEAR(m.f_score, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, NoPositivePredictions) {
    const metrics m = compute_metrics(std::vector<int>{1, 0}, std::vector<int>{0, 0});
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.f_score, 0.0);
    EXPECT_THROW(compute_metrics(std::vector<int>{}, std::vector<int>{}), invalid_input);
}

TEST(Metrics, DecisionThreshold) {
    EXPECT_EQ(decide(0.5), 0);
    EXPECT_EQ(decide(0.5000001), 1);
}

TEST(Evaluate, AlwaysPositiveModel) {
    const graph_dataset ds = toy_dataset(4, 1, 1, 0.0);
    const metrics m = evaluate(constant_model(-30.0, 30.0), ds);
    EXPECT_NEAR(m.accuracy, 0.5, 1e-12);
    EXPECT_NEAR(m.recall, 1.0, 1e-12);
    EXPECT_NEAR(m.precision, 0.5, 1e-12);
    EXPECT_NEAR(m.f_score, 2.0 / 3.0, 1e-12);
}

TEST(KFold, TenSubjectsFiveFolds) {
    const graph_dataset ds = toy_dataset(10, 3, 2, 0.0);
    const auto folds = kfold_split(ds, 5, 99);
    ASSERT_EQ(folds.size(), 5u);
    std::multiset<std::size_t> all_test;
    for (const auto& f : folds) {
        EXPECT_EQ(f.test_subjects.size(), 2u);
        EXPECT_EQ(f.test.size(), 6u);
        EXPECT_EQ(f.train.size() + f.test.size(), ds.graphs.size());
        std::set<std::string> train_subj, test_subj;
        for (std::size_t i : f.train) train_subj.insert(ds.graphs[i].subject_id);
        for (std::size_t i : f.test) test_subj.insert(ds.graphs[i].subject_id);
        for (const auto& s : test_subj) EXPECT_EQ(train_subj.count(s), 0u);
        all_test.insert(f.test.begin(), f.test.end());
    }
    EXPECT_EQ(all_test.size(), ds.graphs.size());
    EXPECT_EQ(std::set<std::size_t>(all_test.begin(), all_test.end()).size(), ds.graphs.size());
}

TEST(KFold, CopiesStayTogetherAndSeedMatters) {
    const graph_dataset ds = toy_dataset(12, 10, 3, 0.0);
    const auto a = kfold_split(ds, 5, 1), b = kfold_split(ds, 5, 1), c = kfold_split(ds, 5, 2);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(a[k].test, b[k].test);
        EXPECT_EQ(a[k].test.size() % 10, 0u);
    }
    bool differs = false;
    for (std::size_t k = 0; k < 5; ++k) differs = differs || a[k].test != c[k].test;
    EXPECT_TRUE(differs);
    EXPECT_THROW(kfold_split(toy_dataset(3, 1, 4, 0.0), 5, 0), invalid_input);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
    const graph_dataset ds = toy_dataset(4, 2, 5, 1.0);
    train_config tc;
    tc.epochs = 0;
    const gnn_model m0 = init_model(model_config{}, 7);
    const auto res = train(m0, ds, tc);
    EXPECT_TRUE(res.log.empty());
    const auto pa = m0.parameters(), pb = res.model.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(*pa[k].second, *pb[k].second);
}

TEST(Train, SameSeedGivesIdenticalRuns) {
    const graph_dataset ds = toy_dataset(6, 2, 6, 1.0);
    train_config tc;
    tc.epochs = 5;
    tc.batch_size = 4;
    tc.seed = 11;
    const auto a = train(init_model(model_config{}, 8), ds, tc);
    const auto b = train(init_model(model_config{}, 8), ds, tc);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        EXPECT_EQ(a.log[e].loss, b.log[e].loss);
        EXPECT_EQ(a.log[e].train.accuracy, b.log[e].train.accuracy);
    }
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(*pa[k].second, *pb[k].second);
}

TEST(Train, SeparableToyReachesPerfectTrainingAccuracy) {
    const graph_dataset ds = toy_dataset(20, 1, 7, 2.0);
    train_config tc;
    tc.seed = 3;
    std::size_t callbacks = 0;
    const auto res = train(init_model(model_config{}, 9), ds, tc, [&](const epoch_log&) { ++callbacks; });
    EXPECT_EQ(callbacks, tc.epochs);
    EXPECT_FALSE(res.diverged);
    EXPECT_EQ(evaluate(res.model, ds).accuracy, 1.0);
    EXPECT_LT(res.log.back().loss, res.log.front().loss);
}

TEST(Train, RejectsBadSettings) {
    const graph_dataset ds = toy_dataset(2, 1, 8, 1.0);
    train_config tc;
    tc.batch_size = 0;
    EXPECT_THROW(train(init_model(model_config{}, 1), ds, tc), invalid_input);
    EXPECT_THROW(train(init_model(model_config{}, 1), graph_dataset{}, train_config{}), invalid_input);
}
