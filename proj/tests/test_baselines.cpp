#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robkit/baselines.hpp"
#include "robkit/error.hpp"
#include "robkit/eval.hpp"
#include "robkit/kernels.hpp"
#include "robkit/rng.hpp"
#include "robkit/tokenize.hpp"

#include <cmath>
#include <filesystem>
#include <map>

using namespace robkit;
using namespace robkit::baselines;

namespace {

SparseMatrix random_sparse(Rng& rng, std::size_t n, std::size_t dim) {
    SparseMatrix x;
    x.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        SparseRow row;
        for (std::size_t c = 0; c < dim; ++c)
            if (rng.next_below(3) != 0)
                row.emplace_back(static_cast<std::uint32_t>(c), rng.uniform(-1.0, 1.0));
        x.rows.push_back(std::move(row));
    }
    return x;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.next_below(2));
    return y;
}

// Central finite differences of an objective over (w, b).
template <typename Objective>
void check_gradient(Objective&& objective, std::vector<double> w, double b, double rel_tol,
                    double skip_if_near_hinge = -1.0, const SparseMatrix* x = nullptr,
                    const std::vector<int>* y = nullptr) {
    std::vector<double> grad_w;
    double grad_b = 0.0;
    objective(w, b, &grad_w, &grad_b);

    const double eps = 1e-6;
    auto check_one = [&](double analytic, double* slot) {
        const double keep = *slot;
        *slot = keep + eps;
        const double up = objective(w, b, nullptr, nullptr);
        *slot = keep - eps;
        const double down = objective(w, b, nullptr, nullptr);
        *slot = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(analytic)});
        CHECK(std::fabs(fd - analytic) / scale < rel_tol);
    };

    // If requested, skip coordinates whose perturbation crosses a hinge point.
    auto near_hinge = [&](std::size_t) {
        if (skip_if_near_hinge <= 0.0 || !x || !y) return false;
        for (std::size_t i = 0; i < x->rows.size(); ++i) {
            double s = b;
            for (const auto& [col, v] : x->rows[i]) s += w[col] * v;
            const double ypm = (*y)[i] == 1 ? 1.0 : -1.0;
            if (std::fabs(1.0 - ypm * s) < skip_if_near_hinge) return true;
        }
        return false;
    };

    for (std::size_t j = 0; j < w.size(); ++j) {
        if (near_hinge(j)) continue;
        check_one(grad_w[j], &w[j]);
    }
    if (!near_hinge(0)) check_one(grad_b, &b);
}

}  // namespace

TEST_CASE("featurizer: unigrams and bigrams of a two-token corpus") {
    const auto f = NgramFeaturizer::fit({"a b"}, {.max_n = 3, .top_k = 1000});
    CHECK(f.vocabulary() == std::vector<std::string>{"a", "a b", "b"});
}

TEST_CASE("featurizer: frequency ties keep the lexicographically smallest grams") {
    // Three equally frequent unigrams, K = 2.
    const auto f = NgramFeaturizer::fit({"c b a"}, {.max_n = 1, .top_k = 2});
    CHECK(f.vocabulary() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("featurizer counts match a brute-force n-gram counter on a 5-doc corpus") {
    const std::vector<std::string> docs = {
        "patients were randomized", "patients were blinded", "outcome was assessed",
        "patients withdrew early", "randomized and blinded patients"};
    const auto f = NgramFeaturizer::fit(docs, {.max_n = 3, .top_k = 1000});

    std::map<std::string, std::uint64_t> oracle;
    for (const auto& d : docs)
        for (const auto& g : ngrams(tokenize(d), 3)) ++oracle[g];

    REQUIRE(f.vocabulary().size() == oracle.size());
    for (std::size_t i = 0; i < f.vocabulary().size(); ++i)
        CHECK(f.frequencies()[i] == oracle.at(f.vocabulary()[i]));
    // Columns sorted lexicographically.
    CHECK(std::is_sorted(f.vocabulary().begin(), f.vocabulary().end()));
}

TEST_CASE("featurizer transform uses only the fitted vocabulary and normalizes") {
    const auto f = NgramFeaturizer::fit({"alpha beta", "alpha gamma"}, {.max_n = 2, .top_k = 10});
    const auto row = f.transform("alpha zzz alpha");
    REQUIRE(!row.empty());
    double norm = 0.0;
    for (const auto& [col, v] : row) {
        CHECK(col < f.dim());
        norm += v * v;
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f.transform("zzz qqq").empty());
    CHECK_THROWS_AS(NgramFeaturizer::fit({}, {}), Error);
}

TEST_CASE("logistic objective gradient matches central finite differences") {
    Rng rng(42);
    for (int round = 0; round < 10; ++round) {
        const std::size_t dim = 4 + rng.next_below(5);
        const auto x = random_sparse(rng, 20, dim);
        const auto y = random_labels(rng, 20);
        std::vector<double> w(dim);
        for (auto& v : w) v = rng.uniform(-0.5, 0.5);
        const double b = rng.uniform(-0.5, 0.5);
        const double l2 = rng.uniform(0.0, 0.3);
        const double pos_w = 1.0 + rng.uniform(0.0, 2.0);

        check_gradient(
            [&](std::vector<double>& wv, double bv, std::vector<double>* gw, double* gb) {
                return logreg_objective(x, y, wv, bv, l2, pos_w, gw, gb);
            },
            w, b, 1e-6);
    }
}

TEST_CASE("hinge subgradient matches finite differences away from the hinge point") {
    Rng rng(43);
    for (int round = 0; round < 10; ++round) {
        const std::size_t dim = 4 + rng.next_below(4);
        const auto x = random_sparse(rng, 15, dim);
        const auto y = random_labels(rng, 15);
        std::vector<double> w(dim);
        for (auto& v : w) v = rng.uniform(-0.5, 0.5);
        const double b = rng.uniform(-0.5, 0.5);
        const double c = 0.5 + rng.uniform(0.0, 2.0);

        check_gradient(
            [&](std::vector<double>& wv, double bv, std::vector<double>* gw, double* gb) {
                return svm_objective(x, y, wv, bv, c, 1.0, gw, gb);
            },
            w, b, 1e-6, /*skip_if_near_hinge=*/1e-3, &x, &y);
    }
}

TEST_CASE("perfectly separable 2-point set trains to accuracy 1") {
    SparseMatrix x;
    x.dim = 2;
    x.rows = {{{0, 1.0}}, {{1, 1.0}}};
    const std::vector<int> y{1, 0};

    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.lr = 0.5;
    const auto lr_model = train_logreg(x, y, cfg);
    CHECK(lr_model.predict(x.rows[0]) == 1);
    CHECK(lr_model.predict(x.rows[1]) == 0);

    const auto svm_model = train_svm(x, y, cfg);
    CHECK(svm_model.predict(x.rows[0]) == 1);
    CHECK(svm_model.predict(x.rows[1]) == 0);
    CHECK(svm_model.decision(x.rows[0]) > 0.0);
    CHECK(svm_model.decision(x.rows[1]) < 0.0);
}

TEST_CASE("all-same-label data drives the predicted probability toward 1") {
    SparseMatrix x;
    x.dim = 1;
    x.rows = {{{0, 1.0}}, {{0, 0.5}}, {{0, 0.8}}};
    const std::vector<int> y{1, 1, 1};
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.lr = 1.0;
    cfg.l2 = 0.0;
    cfg.class_weight_pos = 1.0;
    const auto model = train_logreg(x, y, cfg);
    for (const auto& row : x.rows) CHECK(model.score(row) > 0.95);
}

TEST_CASE("same seed gives bit-identical parameters, different seed differs") {
    Rng rng(11);
    const auto x = random_sparse(rng, 30, 8);
    const auto y = random_labels(rng, 30);
    TrainConfig cfg;
    cfg.seed = 99;
    cfg.epochs = 20;
    const auto m1 = train_logreg(x, y, cfg);
    const auto m2 = train_logreg(x, y, cfg);
    CHECK(m1.weights == m2.weights);
    CHECK(m1.bias == m2.bias);

    cfg.seed = 100;
    const auto m3 = train_logreg(x, y, cfg);
    CHECK(m1.weights != m3.weights);
}

TEST_CASE("monotone regularization: larger l2 shrinks the trained weights") {
    Rng rng(12);
    const auto x = random_sparse(rng, 40, 10);
    const auto y = random_labels(rng, 40);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.lr = 0.3;
    cfg.class_weight_pos = 1.0;

    double prev_norm = 1e30;
    for (double l2 : {1e-4, 1e-2, 1e-1, 1.0}) {
        cfg.l2 = l2;
        const auto model = train_logreg(x, y, cfg);
        const double norm =
            std::sqrt(kernels::l2_norm_sq({model.weights.data(), model.weights.size()}));
        CHECK(norm <= prev_norm + 1e-6);
        prev_norm = norm;
    }
}

TEST_CASE("increasing c weakly decreases training hinge loss on noisy data") {
    Rng rng(13);
    const auto x = random_sparse(rng, 40, 6);
    auto y = random_labels(rng, 40);
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.lr = 0.2;
    cfg.class_weight_pos = 1.0;

    auto mean_hinge = [&](const LinearModel& m) {
        double loss = 0.0;
        for (std::size_t i = 0; i < x.rows.size(); ++i) {
            const double ypm = y[i] == 1 ? 1.0 : -1.0;
            loss += std::max(0.0, 1.0 - ypm * m.decision(x.rows[i]));
        }
        return loss / static_cast<double>(x.rows.size());
    };

    double prev = 1e30;
    for (double c : {0.01, 0.1, 1.0, 10.0}) {
        cfg.c = c;
        const auto model = train_svm(x, y, cfg);
        const double h = mean_hinge(model);
        CHECK(h <= prev + 1e-4);
        prev = h;
    }
}

TEST_CASE("scores and labels: zero model gives 0.5, dot-product oracle holds") {
    LinearModel model;
    model.kind = ModelKind::Logistic;
    model.weights = {0.0, 0.0, 0.0};
    model.bias = 0.0;
    CHECK(model.score({{0, 1.0}}) == doctest::Approx(0.5));

    model.weights = {0.5, -1.0, 2.0};
    model.bias = 0.25;
    const SparseRow row{{0, 2.0}, {2, 1.0}};
    CHECK(model.decision(row) == doctest::Approx(0.5 * 2.0 + 2.0 * 1.0 + 0.25));

    // Hinge scores are raw margins.
    model.kind = ModelKind::Hinge;
    CHECK(model.score(row) == doctest::Approx(model.decision(row)));

    // Dimension mismatch is an error.
    CHECK_THROWS_AS(model.decision({{7, 1.0}}), Error);

    // Permuting rows permutes scores identically.
    SparseMatrix x;
    x.dim = 3;
    x.rows = {{{0, 1.0}}, {{1, 1.0}}, {{2, 1.0}}};
    const auto s = model.scores(x);
    SparseMatrix x_perm;
    x_perm.dim = 3;
    x_perm.rows = {x.rows[2], x.rows[0], x.rows[1]};
    const auto s_perm = model.scores(x_perm);
    CHECK(s_perm[0] == s[2]);
    CHECK(s_perm[1] == s[0]);
    CHECK(s_perm[2] == s[1]);
}

TEST_CASE("divergent training raises an error that mentions the learning rate") {
    SparseMatrix x;
    x.dim = 1;
    x.rows = {{{0, 1e150}}, {{0, -1e150}}};
    const std::vector<int> y{1, 0};
    TrainConfig cfg;
    cfg.lr = 1e200;
    cfg.epochs = 3;
    CHECK_THROWS_WITH_AS(train_logreg(x, y, cfg), doctest::Contains("learning rate"), Error);
}

TEST_CASE("model save/load round trip with header fields") {
    Rng rng(5);
    const auto x = random_sparse(rng, 10, 4);
    const auto y = random_labels(rng, 10);
    TrainConfig cfg;
    cfg.epochs = 5;
    const auto model = train_svm(x, y, cfg);

    const auto dir = std::filesystem::temp_directory_path() / "robkit_model_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "svm.bin";
    model.save(path, json{{"seed", cfg.seed}, {"config_hash", 123}});

    json header;
    const auto loaded = LinearModel::load(path, &header);
    CHECK(loaded.kind == ModelKind::Hinge);
    CHECK(loaded.weights == model.weights);
    CHECK(loaded.bias == model.bias);
    CHECK(header.at("kind") == "svm");
    CHECK(header.at("config_hash") == 123);
    std::filesystem::remove_all(dir);
}

TEST_CASE("end-to-end learnability: separable synthetic corpus reaches macro-F1 >= 0.99") {
    // Class decided by a marker token; tf-idf n-grams make this linearly
    // separable by construction.
    Rng rng(2025);
    std::vector<std::string> texts;
    std::vector<int> labels;
    static const char* filler[] = {"trial", "outcome", "patients", "clinic", "visit", "weekly"};
    for (int i = 0; i < 200; ++i) {
        const int label = static_cast<int>(rng.next_below(2));
        std::string t = label ? "lowrisk marker" : "highrisk marker";
        const int extra = 2 + static_cast<int>(rng.next_below(5));
        for (int w = 0; w < extra; ++w) t += std::string(" ") + filler[rng.next_below(6)];
        texts.push_back(t);
        labels.push_back(label);
    }
    const auto f = NgramFeaturizer::fit(texts, {.max_n = 3, .top_k = 1000});
    const auto x = f.transform_batch(texts);

    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.lr = 0.5;
    for (const bool use_svm : {false, true}) {
        const auto model = use_svm ? train_svm(x, labels, cfg) : train_logreg(x, labels, cfg);
        const auto preds = model.predictions(x);
        const auto prf = eval::macro_prf(labels, preds);
        CHECK(prf.macro_f1 >= 0.99);
    }
}
