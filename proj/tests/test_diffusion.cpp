// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "pointfield/diffusion.hpp"
#include "test_support.hpp"

using namespace pointfield;
using namespace pointfield::diffusion;
using namespace pointfield::testing;
namespace fs = std::filesystem;

namespace {

geo::PointCloud sphere_cloud(std::size_t n, Rng& rng) {
    geo::PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        geo::Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        c.points.push_back(geo::normalized(v));
    }
    return c;
}

DenoiserConfig tiny_arch() {
    DenoiserConfig cfg;
    cfg.point_hidden = 6;
    cfg.head_hidden = 8;
    cfg.time_dim = 4;
    return cfg;
}

}  // namespace

TEST_CASE("linear schedule endpoints, monotonicity, and cumulative products") {
    const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.01);
    CHECK(s.steps() == 1000);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(1000) == 0.01);
    CHECK(s.alpha_bar(1) == 1.0 - 1e-4);

    // cumulative product recomputed independently
    double bar = 1.0;
    for (std::size_t t = 1; t <= 1000; ++t) {
        bar *= 1.0 - s.beta(t);
    }
    CHECK(s.alpha_bar(1000) == doctest::Approx(bar).epsilon(1e-14));
    CHECK(s.alpha_bar(1000) == doctest::Approx(0.006301749772207036).epsilon(1e-12));
    CHECK(s.alpha_bar(1000) > 0.0);
    CHECK(s.alpha_bar(1000) < 0.01);

    for (std::size_t t = 2; t <= 1000; ++t) {
        CHECK(s.beta(t) > s.beta(t - 1));
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t));
    }

    SUBCASE("bad parameters are rejected") {
        CHECK_THROWS_AS(linear_schedule(1, 1e-4, 0.01), ContractViolation);
        CHECK_THROWS_AS(linear_schedule(100, 0.01, 0.01), ContractViolation);
        CHECK_THROWS_AS(linear_schedule(100, 0.02, 0.01), ContractViolation);
        CHECK_THROWS_AS(linear_schedule(100, 1e-4, 1.0), ContractViolation);
    }
    SUBCASE("step accessors are 1-indexed and bounds-checked") {
        CHECK_THROWS_AS(s.beta(0), ContractViolation);
        CHECK_THROWS_AS(s.alpha_bar(1001), ContractViolation);
    }
}

TEST_CASE("forward marginal has the closed-form mean and the noise limit") {
    Rng rng(11);
    Tensor x0 = Tensor::zeros({4, 3});
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x0.raw()[i] = rng.uniform(-1.0, 1.0);
    }
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);

    SUBCASE("zero noise scales the input by sqrt of the cumulative product") {
        const Tensor zero = Tensor::zeros({4, 3});
        const Tensor out = q_sample(x0, 37, zero, s);
        const double keep = std::sqrt(s.alpha_bar(37));
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out.values()[i] == doctest::Approx(keep * x0.values()[i])
                                         .epsilon(1e-15));
        }
    }
    SUBCASE("when the cumulative product vanishes the sample is the noise") {
        const NoiseSchedule heavy = linear_schedule(200, 0.05, 0.5);
        const Tensor eps = gaussian_tensor(4, 3, rng);
        const Tensor out = q_sample(x0, 200, eps, heavy);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(std::abs(out.values()[i] - eps.values()[i]) < 1e-10);
        }
    }
    SUBCASE("step bounds and shape are enforced") {
        const Tensor eps = Tensor::zeros({4, 3});
        CHECK_THROWS_AS(q_sample(x0, 0, eps, s), ContractViolation);
        CHECK_THROWS_AS(q_sample(x0, 101, eps, s), ContractViolation);
        CHECK_THROWS_AS(q_sample(x0, 5, Tensor::zeros({3, 3}), s), ContractViolation);
    }
    SUBCASE("one forward step equals the closed form at the first step") {
        const Tensor eps = gaussian_tensor(4, 3, rng);
        const Tensor a = q_step(x0, 1, eps, s);
        const Tensor b = q_sample(x0, 1, eps, s);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("closed-form marginal matches the iterated kernel in distribution") {
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);
    const double x0_value = 0.8;
    Tensor x0 = Tensor::zeros({1, 3});
    x0.at(0, 0) = x0_value;  // remaining coordinates stay at zero

    const std::size_t trials = 2000;
    for (const std::size_t t : {std::size_t{1}, std::size_t{10}, std::size_t{100}}) {
        const double want_mean = std::sqrt(s.alpha_bar(t)) * x0_value;
        const double want_var = 1.0 - s.alpha_bar(t);
        for (const bool iterated : {false, true}) {
            Rng rng(900 + t + (iterated ? 1 : 0));
            double sum = 0.0;
            double sum_sq = 0.0;
            for (std::size_t trial = 0; trial < trials; ++trial) {
                Tensor x = x0;
                if (iterated) {
                    for (std::size_t step = 1; step <= t; ++step) {
                        x = q_step(x, step, gaussian_tensor(1, 3, rng), s);
                    }
                } else {
                    x = q_sample(x0, t, gaussian_tensor(1, 3, rng), s);
                }
                sum += x.at(0, 0);
                sum_sq += x.at(0, 0) * x.at(0, 0);
            }
            const double n = static_cast<double>(trials);
            const double mean = sum / n;
            const double var = sum_sq / n - mean * mean;
            // standard errors: sd/sqrt(n) for the mean, var*sqrt(2/(n-1)) for
            // the variance of a Gaussian sample
            const double se_mean = std::sqrt(want_var / n);
            const double se_var = want_var * std::sqrt(2.0 / (n - 1.0));
            INFO("t=", t, " iterated=", iterated);
            CHECK(std::abs(mean - want_mean) < 3.5 * se_mean);
            CHECK(std::abs(var - want_var) < 3.5 * se_var);
        }
    }
}

TEST_CASE("denoiser respects point-set symmetries") {
    const DenoiserConfig cfg;  // full-size widths
    const ParamSet params = make_denoiser_params(cfg, 42);
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);
    Rng rng(7);
    const Tensor cond = gaussian_tensor(5, 3, rng);
    const Tensor noisy = gaussian_tensor(7, 3, rng);
    const Tensor base = denoiser_predict(params, cfg, cond, noisy, 13, s);

    SUBCASE("permuting the noisy rows permutes the predictions identically") {
        const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
        Tensor shuffled = Tensor::zeros({7, 3});
        for (std::size_t i = 0; i < perm.size(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                shuffled.at(i, c) = noisy.at(perm[i], c);
            }
        }
        const Tensor out = denoiser_predict(params, cfg, cond, shuffled, 13, s);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(out.at(i, c) == doctest::Approx(base.at(perm[i], c))
                                          .epsilon(1e-12));
            }
        }
    }
    SUBCASE("permuting the condition rows changes nothing") {
        Tensor shuffled = Tensor::zeros({5, 3});
        const std::vector<std::size_t> perm{4, 2, 0, 3, 1};
        for (std::size_t i = 0; i < perm.size(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                shuffled.at(i, c) = cond.at(perm[i], c);
            }
        }
        const Tensor out = denoiser_predict(params, cfg, shuffled, noisy, 13, s);
        for (std::size_t i = 0; i < noisy.rows(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(std::abs(out.at(i, c) - base.at(i, c)) < 1e-6);
            }
        }
    }
    SUBCASE("the step index changes the prediction") {
        const Tensor other = denoiser_predict(params, cfg, cond, noisy, 99, s);
        double diff = 0.0;
        for (std::size_t i = 0; i < other.size(); ++i) {
            diff += std::abs(other.values()[i] - base.values()[i]);
        }
        CHECK(diff > 1e-8);
    }
}

TEST_CASE("denoiser and loss gradients match finite differences") {
    const DenoiserConfig cfg = tiny_arch();
    ParamSet params = make_denoiser_params(cfg, 3);
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);
    Rng rng(19);
    const Tensor cond = gaussian_tensor(3, 3, rng);
    const Tensor x_t = gaussian_tensor(4, 3, rng);
    const Tensor eps = gaussian_tensor(4, 3, rng);

    auto loss_of = [&](const ParamSet& p) {
        ad::Tape tape;
        const ad::BoundParams bound(tape, p);
        const ad::Var eps_hat = denoiser_forward_all(
            tape, bound, cfg, tape.constant(cond), tape.constant(x_t), 7, s);
        return masked_eps_loss(tape, eps_hat, eps, cond.rows()).value()
            .scalar_value();
    };
    std::vector<Tensor> analytic;
    {
        ad::Tape tape;
        const ad::BoundParams bound(tape, params);
        const ad::Var eps_hat = denoiser_forward_all(
            tape, bound, cfg, tape.constant(cond), tape.constant(x_t), 7, s);
        const ad::Var loss = masked_eps_loss(tape, eps_hat, eps, cond.rows());
        tape.backward(loss);
        analytic = bound.grads(params);
    }
    const FdReport report = fd_check_params(params, loss_of, analytic, 1e-5);
    INFO("worst parameter: ", report.where);
    CHECK(report.max_rel < 1e-6);
}

TEST_CASE("masked loss ignores condition rows in value and gradient") {
    ad::Tape tape;
    Rng rng(23);
    const std::size_t n_cond = 3;
    const std::size_t n_gen = 4;
    const Tensor eps = gaussian_tensor(n_gen, 3, rng);

    Tensor pred = gaussian_tensor(n_cond + n_gen, 3, rng);
    const ad::Var pred_var = tape.input(pred);
    const ad::Var loss = masked_eps_loss(tape, pred_var, eps, n_cond);

    double by_hand = 0.0;
    for (std::size_t i = 0; i < n_gen; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double r = pred.at(n_cond + i, c) - eps.at(i, c);
            by_hand += r * r;
        }
    }
    by_hand /= 3.0 * static_cast<double>(n_gen);
    CHECK(loss.value().scalar_value() == doctest::Approx(by_hand).epsilon(1e-12));

    tape.backward(loss);
    const Tensor grad = pred_var.grad();
    for (std::size_t i = 0; i < n_cond; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(grad.at(i, c) == 0.0);  // exactly masked out
        }
    }
    for (std::size_t i = 0; i < n_gen; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double want = 2.0 * (pred.at(n_cond + i, c) - eps.at(i, c)) /
                                (3.0 * static_cast<double>(n_gen));
            CHECK(grad.at(n_cond + i, c) == doctest::Approx(want).epsilon(1e-12));
        }
    }

    SUBCASE("a perfect prediction scores exactly zero") {
        ad::Tape t2;
        Tensor perfect = Tensor::zeros({n_cond + n_gen, 3});
        for (std::size_t i = 0; i < n_gen; ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                perfect.at(n_cond + i, c) = eps.at(i, c);
            }
        }
        // garbage in the condition rows must not matter
        perfect.at(0, 0) = 1e9;
        perfect.at(2, 1) = -123.0;
        const ad::Var z = masked_eps_loss(t2, t2.input(perfect), eps, n_cond);
        CHECK(z.value().scalar_value() == 0.0);
    }
}

TEST_CASE("pair loss equals the recomputed masked residual mean") {
    Rng rng(31);
    const geo::PointCloud source = sphere_cloud(40, rng);
    geo::CloudPair pair = geo::make_training_pair(source, 0.6, 0.5, 9);
    normalize_pair(pair);
    const DenoiserConfig cfg = tiny_arch();
    const ParamSet params = make_denoiser_params(cfg, 5);
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);
    const std::size_t t = 21;
    const Tensor eps = gaussian_tensor(pair.target_extra.size(), 3, rng);

    ad::Tape tape;
    const ad::BoundParams bound(tape, params);
    const double loss =
        diffusion_loss(tape, bound, cfg, pair, t, eps, s).value().scalar_value();

    const Tensor x_t = q_sample(geo::to_tensor(pair.target_extra), t, eps, s);
    const Tensor eps_hat = denoiser_predict(
        params, cfg, geo::to_tensor(pair.condition), x_t, t, s);
    double want = 0.0;
    for (std::size_t i = 0; i < eps_hat.rows(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double r = eps.at(i, c) - eps_hat.at(i, c);
            want += r * r;
        }
    }
    want /= 3.0 * static_cast<double>(eps_hat.rows());
    CHECK(std::abs(loss - want) < 1e-9);
}

TEST_CASE("the first reverse step undoes the first forward step exactly") {
    Rng rng(41);
    const Tensor x0 = gaussian_tensor(6, 3, rng);
    const Tensor eps = gaussian_tensor(6, 3, rng);
    const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.01);
    const Tensor x1 = q_sample(x0, 1, eps, s);
    const Tensor back = reverse_mean(x1, eps, 1, s);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(std::abs(back.values()[i] - x0.values()[i]) < 1e-6);
    }
}

TEST_CASE("reverse stepping pins the condition and is deterministic at the end") {
    Rng rng(43);
    const DenoiserConfig cfg = tiny_arch();
    const ParamSet params = make_denoiser_params(cfg, 8);
    const NoiseSchedule s = linear_schedule(100, 1e-4, 0.01);
    const Tensor cond = gaussian_tensor(4, 3, rng);
    const Tensor x_t = gaussian_tensor(5, 3, rng);

    SUBCASE("the final step ignores the noise argument") {
        const DiffusionState state{cond, x_t, 1};
        const DiffusionState a =
            reverse_step(params, cfg, state, s, gaussian_tensor(5, 3, rng));
        const DiffusionState b =
            reverse_step(params, cfg, state, s, gaussian_tensor(5, 3, rng));
        CHECK(a.t == 0);
        for (std::size_t i = 0; i < a.noisy_part.size(); ++i) {
            CHECK(a.noisy_part.values()[i] == b.noisy_part.values()[i]);
        }
    }
    SUBCASE("intermediate steps use the noise") {
        const DiffusionState state{cond, x_t, 50};
        const DiffusionState a =
            reverse_step(params, cfg, state, s, gaussian_tensor(5, 3, rng));
        const DiffusionState b =
            reverse_step(params, cfg, state, s, gaussian_tensor(5, 3, rng));
        double diff = 0.0;
        for (std::size_t i = 0; i < a.noisy_part.size(); ++i) {
            diff += std::abs(a.noisy_part.values()[i] - b.noisy_part.values()[i]);
        }
        CHECK(diff > 1e-9);
    }
    SUBCASE("the condition tensor rides along bit-identical") {
        DiffusionState state{cond, x_t, 20};
        while (state.t > 0) {
            state = reverse_step(params, cfg, state, s,
                                 gaussian_tensor(5, 3, rng));
            for (std::size_t i = 0; i < cond.size(); ++i) {
                CHECK(state.condition.values()[i] == cond.values()[i]);
            }
        }
    }
}

TEST_CASE("super-resolution sampling is finite, sized, pinned, and seeded") {
    Rng rng(51);
    const geo::PointCloud condition = sphere_cloud(20, rng);
    const DenoiserConfig cfg = tiny_arch();
    const ParamSet params = make_denoiser_params(cfg, 12);
    const NoiseSchedule s = linear_schedule(20, 1e-4, 0.01);

    std::size_t observed_steps = 0;
    const Tensor cond_tensor = geo::to_tensor(condition);
    TrajectoryObserver observer = [&](const DiffusionState& state) {
        observed_steps += 1;
        REQUIRE(state.condition.same_shape(cond_tensor));
        for (std::size_t i = 0; i < cond_tensor.size(); ++i) {
            CHECK(state.condition.values()[i] == cond_tensor.values()[i]);
        }
    };
    const geo::PointCloud out =
        sample_superresolution(params, cfg, condition, 60, s, 77, 0, observer);
    CHECK(out.size() == condition.size() + 60);
    CHECK(observed_steps == s.steps());
    for (const geo::Vec3& p : out.points) {
        CHECK(geo::finite(p));
    }
    for (std::size_t i = 0; i < condition.size(); ++i) {
        CHECK(out[i] == condition[i]);  // condition rows come first, untouched
    }

    SUBCASE("same seed reproduces the cloud exactly") {
        const geo::PointCloud again =
            sample_superresolution(params, cfg, condition, 60, s, 77);
        REQUIRE(again.size() == out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(again[i] == out[i]);
        }
    }
    SUBCASE("chunked generation still yields the full count, deterministically") {
        const geo::PointCloud chunked =
            sample_superresolution(params, cfg, condition, 60, s, 78, 17);
        CHECK(chunked.size() == condition.size() + 60);
        const geo::PointCloud chunked2 =
            sample_superresolution(params, cfg, condition, 60, s, 78, 17);
        for (std::size_t i = 0; i < chunked.size(); ++i) {
            CHECK(chunked[i] == chunked2[i]);
        }
    }
    SUBCASE("an unnormalized condition is rejected") {
        geo::PointCloud big = condition;
        big.points.push_back({2.0, 0.0, 0.0});
        CHECK_THROWS_AS(sample_superresolution(params, cfg, big, 8, s, 1),
                        ContractViolation);
    }
}

TEST_CASE("checkpoint metadata reconstructs the architecture and schedule") {
    const DenoiserConfig cfg = tiny_arch();
    ParamSet params = make_denoiser_params(cfg, 99);
    stamp_denoiser_meta(params, cfg, 100, 1e-4, 0.01);
    const fs::path path = fs::temp_directory_path() / "pointfield_denoiser.ckpt";
    params.save(path.string());

    const ParamSet loaded = ParamSet::load(path.string());
    const DenoiserConfig back = denoiser_config_from_meta(loaded);
    CHECK(back.point_hidden == cfg.point_hidden);
    CHECK(back.head_hidden == cfg.head_hidden);
    CHECK(back.time_dim == cfg.time_dim);
    const NoiseSchedule s = schedule_from_meta(loaded);
    CHECK(s.steps() == 100);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(100) == 0.01);
    fs::remove(path);

    SUBCASE("missing metadata is a parse error") {
        ParamSet bare = make_denoiser_params(cfg, 99);
        CHECK_THROWS_AS(denoiser_config_from_meta(bare), ParseError);
    }
}

TEST_CASE("pair source draws valid pairs even when degeneracy is likely") {
    Rng rng(61);
    const geo::PointCloud small = sphere_cloud(12, rng);
    const PairSource source = cloud_pair_source(small, 0.2, 1.0);
    Rng draw_rng(5);
    for (int i = 0; i < 50; ++i) {
        const geo::CloudPair pair = source(draw_rng);
        CHECK(!pair.condition.empty());
        CHECK(!pair.target_extra.empty());
        CHECK(pair.condition.size() + pair.target_extra.size() ==
              pair.full_target.size());
    }
    SUBCASE("identical generator state reproduces the draw") {
        Rng a(9);
        Rng b(9);
        const geo::CloudPair pa = source(a);
        const geo::CloudPair pb = source(b);
        REQUIRE(pa.full_target.size() == pb.full_target.size());
        for (std::size_t i = 0; i < pa.full_target.size(); ++i) {
            CHECK(pa.full_target[i] == pb.full_target[i]);
        }
    }
    SUBCASE("a too-small source cloud is rejected up front") {
        const geo::PointCloud tiny = sphere_cloud(9, rng);
        CHECK_THROWS_AS(cloud_pair_source(tiny, 0.2, 1.0), ContractViolation);
    }
}

TEST_CASE("training takes gradient steps and reports progress") {
    Rng rng(71);
    const geo::PointCloud source = sphere_cloud(60, rng);
    TrainDiffusionConfig cfg;
    cfg.arch.point_hidden = 16;
    cfg.arch.head_hidden = 32;
    cfg.arch.time_dim = 8;
    cfg.schedule_steps = 100;
    cfg.seed = 4;

    SUBCASE("one step moves the weights") {
        cfg.steps = 1;
        cfg.lr = 1e-3;
        const ParamSet trained =
            train_diffusion(cloud_pair_source(source), cfg);
        const ParamSet init =
            make_denoiser_params(cfg.arch, Rng::derive(cfg.seed, 1));
        REQUIRE(trained.count() == init.count());
        double moved = 0.0;
        for (std::size_t p = 0; p < trained.count(); ++p) {
            const Tensor& a = trained.tensor_at(p);
            const Tensor& b = init.tensor_at(p);
            for (std::size_t i = 0; i < a.size(); ++i) {
                moved += std::abs(a.values()[i] - b.values()[i]);
            }
        }
        CHECK(moved > 1e-6);
    }
    SUBCASE("a short run lowers the running-average loss") {
        cfg.steps = 150;
        cfg.lr = 1e-3;
        TrainDiffusionReport report;
        train_diffusion(cloud_pair_source(source), cfg, &report);
        REQUIRE(report.losses.size() == 150);
        CHECK(report.last_window_avg < report.first_window_avg);
    }
    SUBCASE("an exploding run aborts with the last checkpoint saved") {
        cfg.steps = 50;
        cfg.lr = 1e30;  // forces an overflow within a few steps
        const fs::path ckpt =
            fs::temp_directory_path() / "pointfield_diverged.ckpt";
        cfg.checkpoint_path = ckpt.string();
        try {
            train_diffusion(cloud_pair_source(source), cfg);
            FAIL("expected TrainingDiverged");
        } catch (const TrainingDiverged& e) {
            CHECK(e.last_checkpoint() == ckpt.string());
            const ParamSet saved = ParamSet::load(e.last_checkpoint());
            for (std::size_t p = 0; p < saved.count(); ++p) {
                CHECK(saved.tensor_at(p).all_finite());
            }
        }
        fs::remove(ckpt);
    }
}
