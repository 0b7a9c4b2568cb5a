#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "hgan/preprocess.hpp"
#include "hgan/rng.hpp"
#include "hgan/train.hpp"
#include "support/gradcheck.hpp"

using namespace hgan;

namespace {

template <class T>
Tensor<T> random_signed(Shape s, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor<T> t(s);
    for (auto& v : t.values())
        v = static_cast<T>(d(rng));
    return t;
}

Tensor<float> constant(Shape s, float v) { return Tensor<float>(s, v); }

Dataset tiny_dataset(int patches = 24, int side = 32)
{
    SynthParams p;
    p.patch_side = side;
    p.n_cells_min = side >= 32 ? 3 : 1;
    p.n_cells_max = side >= 32 ? 4 : 2;
    p.nucleus_radius = side >= 32 ? 4.0 : 3.0;
    p.seed = 5;
    SplitSpec split;
    split.n_patches = patches;
    split.n_slides = 3;
    split.n_train_slides = 2;
    return from_synthetic(generate_dataset(p, split));
}

TrainConfig tiny_config(Variant v, int depth = 5)
{
    auto c = TrainConfig::for_variant(v);
    c.depth = depth;
    c.batch_size = 8;
    c.total_epochs = 2;
    c.seed = 17;
    c.scale_schedules_to_epochs();
    return c;
}

Batch fixed_batch(const Dataset& d, std::size_t n)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
        idx.push_back(i);
    return make_batch(d.samples, idx);
}

std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("hgan_test_train_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::vector<std::string> names(const std::vector<LossTerm>& terms)
{
    std::vector<std::string> out;
    for (const auto& t : terms)
        out.push_back(t.name);
    return out;
}

}  // namespace

TEST_CASE("compositing weight follows the scaled logistic")
{
    const CompositeSchedule s;
    CHECK(beta(s, 5.0) == 0.0);
    CHECK(beta(s, 10.0) == 0.5);
    CHECK(beta(s, 9.0) == doctest::Approx(1.0 / (1.0 + std::sqrt(99.0))).epsilon(1e-12));
    CHECK(beta(s, 9.0) == doctest::Approx(0.0913).epsilon(1e-3));
    CHECK(beta(s, 8.0) <= 0.01);
    CHECK(beta(s, 12.0) >= 0.99);
    CHECK(beta(s, 30.0) == 1.0);
    double prev = 0.0;
    for (int i = 0; i <= 30000; ++i) {
        const double b = beta(s, i * 1e-3);
        CHECK_MESSAGE(b >= prev, "t=", i * 1e-3);
        prev = b;
    }
}

TEST_CASE("scaled schedules keep the ramp shape")
{
    const auto s = CompositeSchedule::scaled(10.0 / 30.0);
    CHECK(s.start_epoch == doctest::Approx(8.0 / 3.0));
    CHECK(beta(s, 10.0 / 3.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(beta(s, s.start_epoch) == 0.0);
    CHECK(beta(s, s.start_epoch + 1e-12) == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(beta(s, s.end_epoch - 1e-12) == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(beta(s, s.end_epoch) == 1.0);
    // The same relative position inside the window gives the same weight.
    CHECK(beta(s, 3.0) == doctest::Approx(beta(CompositeSchedule{}, 9.0)).epsilon(1e-12));

    CompositeSchedule bad;
    bad.mid_epoch = bad.start_epoch;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("learning rate decays linearly to zero")
{
    const TrainConfig c;
    CHECK(learning_rate(c, 0.0) == 2e-4);
    CHECK(learning_rate(c, 20.0) == 2e-4);
    CHECK(learning_rate(c, 25.0) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(learning_rate(c, 30.0) == 0.0);
    CHECK(learning_rate(c, 20.0 + 1e-9) == doctest::Approx(2e-4).epsilon(1e-9));

    auto scaled = c;
    scaled.total_epochs = 10;
    scaled.scale_schedules_to_epochs();
    CHECK(scaled.decay_start_epoch == doctest::Approx(20.0 / 3.0));
    CHECK(learning_rate(scaled, 10.0) == 0.0);
}

TEST_CASE("config invariants")
{
    auto c = TrainConfig{};
    c.decay_start_epoch = 30;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.lambda_l1 = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(TrainConfig::for_variant(Variant::regression_mc).discriminator_count() == 0);
    CHECK(TrainConfig::for_variant(Variant::mc).discriminator_count() == 2);
    CHECK(TrainConfig::for_variant(Variant::md).discriminator_count() == 1);
}

TEST_CASE("composite blends fake and real")
{
    const Shape s{1, 2, 4, 4};
    const auto fake = random_signed<float>(s, 1);
    const auto real = random_signed<float>(s, 2);
    const auto at0 = composite(fake, real, 0.0);
    const auto at1 = composite(fake, real, 1.0);
    for (std::size_t i = 0; i < fake.size(); ++i) {
        CHECK(at0[i] == real[i]);
        CHECK(at1[i] == fake[i]);
    }
    const auto half = composite(constant(s, 1.0f), constant(s, 0.0f), 0.5);
    for (float v : half.values())
        CHECK(v == 0.5f);
    for (double b : {0.1, 0.37, 0.9}) {
        const auto c = composite(fake, real, b);
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(c[i] >= std::min(fake[i], real[i]) - 1e-6f);
            CHECK(c[i] <= std::max(fake[i], real[i]) + 1e-6f);
        }
    }
    CHECK_THROWS_AS(composite(fake, constant({1, 1, 4, 4}, 0.0f), 0.5), ShapeMismatch);
}

TEST_CASE("binary cross-entropy on score maps")
{
    const Shape s{1, 1, 2, 2};
    CHECK(bce_with_logits(constant(s, 0.0f), 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_with_logits(constant(s, 0.0f), 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Saturated, correct scores bottom out at the clamp floor.
    const double floor = -std::log(1.0 - kScoreClamp);
    Tensor<float> grad;
    CHECK(bce_with_logits(constant(s, 40.0f), 1.0, &grad) == doctest::Approx(floor).epsilon(1e-9));
    for (float g : grad.values())
        CHECK(g == 0.0f);
    CHECK(bce_with_logits(constant(s, -40.0f), 0.0) == doctest::Approx(floor).epsilon(1e-9));
    // Saturated, wrong scores are capped instead of becoming infinite.
    CHECK(bce_with_logits(constant(s, -200.0f), 1.0) == doctest::Approx(-std::log(kScoreClamp)).epsilon(1e-9));

    // 2x2 toy map against a hand-written elementwise mean.
    Tensor<float> toy(s);
    const float z[] = {-1.5f, 0.25f, 2.0f, 0.7f};
    std::copy(std::begin(z), std::end(z), toy.data());
    for (double label : {0.0, 1.0}) {
        double expect = 0;
        for (float v : z) {
            const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
            expect += -(label * std::log(p) + (1 - label) * std::log(1 - p));
        }
        CHECK(bce_with_logits(toy, label, &grad) == doctest::Approx(expect / 4).epsilon(1e-12));
        for (std::size_t i = 0; i < 4; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
            CHECK(grad[i] == doctest::Approx((p - label) / 4).epsilon(1e-6));
        }
    }
}

TEST_CASE("adversarial objectives have the prescribed terms")
{
    const Shape s{1, 2, 3, 3};
    const auto half = constant(s, 0.0f);
    const ScorePair two[] = {{&half, &half}, {&half, &half}};
    const auto sep = cgan_loss_separate(two);
    REQUIRE(sep.discriminator_terms.size() == 4);
    REQUIRE(sep.generator_terms.size() == 2);
    for (const auto& t : sep.discriminator_terms)
        CHECK(t.value == doctest::Approx(std::log(2.0)));
    CHECK(sep.discriminator() == doctest::Approx(4 * std::log(2.0)));

    const ScorePair one[] = {{&half, &half}};
    const auto joint = cgan_loss_joint(one);
    CHECK(joint.discriminator_terms.size() == 2);
    CHECK(joint.generator_terms.size() == 1);
    CHECK(joint.discriminator() == doctest::Approx(2 * std::log(2.0)));

    CHECK_THROWS_AS(cgan_loss_separate(one), ModeMismatch);
    CHECK_THROWS_AS(cgan_loss_joint(two), ModeMismatch);

    // A perfect joint discriminator sits at the clamp floor.
    const auto real = constant(s, 50.0f);
    const auto fake = constant(s, -50.0f);
    const ScorePair perfect[] = {{&real, &fake}};
    const auto p = cgan_loss_joint(perfect);
    CHECK(p.discriminator() == doctest::Approx(-2 * std::log(1.0 - kScoreClamp)).epsilon(1e-9));
    CHECK(p.generator() == doctest::Approx(-std::log(kScoreClamp)).epsilon(1e-9));
}

TEST_CASE("L1 loss")
{
    const Shape s{1, 3, 8, 8};
    const auto a = random_signed<float>(s, 3);
    const auto b = random_signed<float>(s, 4);
    CHECK(l1_loss(a, a) == 0.0);
    CHECK(l1_loss(constant(s, 1.0f), constant(s, 0.0f)) == 1.0);
    double brute = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        brute += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    CHECK(std::abs(l1_loss(a, b) - brute / a.size()) < 1e-7);
    CHECK(l1_loss(a, b) == l1_loss(b, a));
    CHECK(l1_loss(a, b) > 0.0);
    CHECK_THROWS_AS(l1_loss(a, constant({1, 1, 8, 8}, 0.0f)), ShapeMismatch);
}

TEST_CASE("total generator objective")
{
    CHECK(total_generator_objective(0.7, 0.01, 0.02, 100.0) == doctest::Approx(3.7).epsilon(1e-12));
    CHECK(total_generator_objective(0.7, 0.01, 0.02, 0.0) == 0.7);
    CHECK(total_generator_objective(0.0, 0.01, 0.02, 100.0) == doctest::Approx(3.0));
    CHECK_THROWS_AS(total_generator_objective(0.7, 0.01, 0.02, -1.0), std::invalid_argument);
}

TEST_CASE("adam matches the bias-corrected update")
{
    Param<float> p("w", 2);
    p.value = {1.0f, -2.0f};
    ParamRefs<float> refs{&p};
    Adam opt(refs, 0.5, 0.999, 1e-8);
    double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
    const double grads[3][2] = {{0.3, -0.1}, {0.2, 0.4}, {-0.5, 0.05}};
    for (int t = 1; t <= 3; ++t) {
        opt.zero_grad();
        for (int i = 0; i < 2; ++i)
            p.grad[i] = static_cast<float>(grads[t - 1][i]);
        opt.step(1e-2);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.5 * m[i] + 0.5 * grads[t - 1][i];
            v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
            const double mh = m[i] / (1 - std::pow(0.5, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            w[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(p.value[i] == doctest::Approx(w[i]).epsilon(1e-5));
        }
    }
    CHECK(opt.steps() == 3);
}

TEST_CASE("batches are assembled in signed range")
{
    const auto d = tiny_dataset(12, 32);
    const std::size_t idx[] = {3, 1};
    const Batch b = make_batch(d.samples, idx);
    CHECK(b.x.shape() == Shape{1, 2, 32, 32});
    CHECK(b.y2.at(0, 0, 5, 7) == doctest::Approx(2 * d.samples[3].cd8.at(7, 5) - 1));
    CHECK(b.y1.at(0, 1, 9, 2) == doctest::Approx(2 * d.samples[1].cd3.at(2, 9) - 1));
    CHECK_THROWS(make_batch(d.samples, std::span<const std::size_t>{}));
}

TEST_CASE("gradient of the full generator objective matches finite differences")
{
    auto spec = GeneratorSpec::with_depth(6, GeneratorTopology::mutual);
    spec.encoder_filters = {2, 3, 4, 4, 4, 4};
    spec.d1_filters = {4, 4, 4, 3, 2};
    spec.d2_filters = {8, 8, 8, 6, 4};
    Generator<double> g(spec);
    g.init(31);
    DiscriminatorSpec ds;
    ds.mode = DiscriminatorMode::joint;
    ds.filters = {4, 6, 8, 8};
    Discriminator<double> d(ds);
    d.init(32);
    const Shape s{1, 2, 64, 64};
    const auto x = random_signed<double>(s, 7);
    const auto y1 = random_signed<double>(s, 8);
    const auto y2 = random_signed<double>(s, 9);
    const auto code = CodeInput<double>::composite(y1, 0.4);
    const double lambda = 100.0;

    auto objective = [&] {
        const auto p = g.forward(x, code, true, 5);
        const auto tr = d.forward(concat_channels<double>({&x, &p.cd3(), &p.cd8()}), true);
        return total_generator_objective(bce_with_logits(tr.logits, 1.0), l1_loss(p.cd3(), y1), l1_loss(p.cd8(), y2),
                                         lambda);
    };

    const auto pass = g.forward(x, code, true, 5);
    const auto tr = d.forward(concat_channels<double>({&x, &pass.cd3(), &pass.cd8()}), true);
    Tensor<double> dl;
    bce_with_logits(tr.logits, 1.0, &dl);
    const auto dx = d.backward(tr, dl, true, false);
    auto g1 = slice_channels(dx, 1, 1);
    auto g2 = slice_channels(dx, 2, 1);
    Tensor<double> l1g;
    l1_loss(pass.cd3(), y1, &l1g, lambda);
    kernels::axpy<double>(1.0, l1g, g1);
    l1_loss(pass.cd8(), y2, &l1g, lambda);
    kernels::axpy<double>(1.0, l1g, g2);
    for (auto* p : g.parameters())
        p->zero_grad();
    g.backward(pass, &g1, &g2, true);

    // The objective is O(lambda); entries below 1e-4 would be compared against round-off.
    for (auto& [name, params] : g.subnetworks()) {
        const auto samples = testing::finite_difference_check(params, objective, 5, 41, 1e-5, 1e-4);
        REQUIRE(samples.size() == 5);
        for (const auto& smp : samples)
            CHECK_MESSAGE(smp.rel_error() < 1e-3, name, " ", smp.param, "[", smp.index, "] analytic ", smp.analytic,
                          " numeric ", smp.numeric);
    }
}

TEST_CASE("a joint score drives both generators on its own")
{
    auto spec = GeneratorSpec::with_depth(4, GeneratorTopology::mutual);
    spec.encoder_filters = {4, 6, 8, 8};
    spec.d1_filters = {8, 6, 4};
    spec.d2_filters = {16, 12, 8};
    Generator<double> g(spec);
    g.init(1);
    DiscriminatorSpec ds;
    ds.mode = DiscriminatorMode::joint;
    ds.filters = {4, 8};
    Discriminator<double> d(ds);
    d.init(2);
    const auto x = random_signed<double>({1, 2, 16, 16}, 3);
    const auto pass = g.forward(x, CodeInput<double>::generated(), true, 4);
    const auto tr = d.forward(concat_channels<double>({&x, &pass.cd3(), &pass.cd8()}), true);
    Tensor<double> dl;
    bce_with_logits(tr.logits, 1.0, &dl);
    const auto dx = d.backward(tr, dl, true, false);
    const auto g1 = slice_channels(dx, 1, 1);
    const auto g2 = slice_channels(dx, 2, 1);

    auto grad_norm = [&](const std::string& sub) {
        double s = 0;
        for (auto& [name, params] : g.subnetworks())
            if (name == sub)
                for (auto* p : params)
                    for (double v : p->grad)
                        s += v * v;
        return s;
    };
    // G1 frozen: only the CD8 slice of the shared score is back-propagated.
    for (auto* p : g.parameters())
        p->zero_grad();
    g.backward(pass, nullptr, &g2, false);
    CHECK(grad_norm("d2") > 0.0);
    CHECK(grad_norm("d1") == 0.0);
    // G2 frozen: the CD3 slice alone reaches d1.
    for (auto* p : g.parameters())
        p->zero_grad();
    g.backward(pass, &g1, nullptr, false);
    CHECK(grad_norm("d1") > 0.0);
    CHECK(grad_norm("d2") == 0.0);
}

TEST_CASE("every variant trains one step with exactly its loss terms")
{
    const auto data = tiny_dataset(12, 32);
    const Batch b = fixed_batch(data, 4);
    struct Expect {
        Variant v;
        std::vector<std::string> d_terms;
        std::vector<std::string> g_terms;
    };
    const std::vector<Expect> table = {
        {Variant::mcd, {"D.real", "D.fake"}, {"cgan.D", "l1.cd3", "l1.cd8"}},
        {Variant::md, {"D.real", "D.fake"}, {"cgan.D", "l1.cd3", "l1.cd8"}},
        {Variant::d, {"D.real", "D.fake"}, {"cgan.D", "l1.cd3", "l1.cd8"}},
        {Variant::mc, {"D1.real", "D1.fake", "D2.real", "D2.fake"}, {"cgan.D1", "cgan.D2", "l1.cd3", "l1.cd8"}},
        {Variant::m, {"D1.real", "D1.fake", "D2.real", "D2.fake"}, {"cgan.D1", "cgan.D2", "l1.cd3", "l1.cd8"}},
        {Variant::pix2pix, {"D1.real", "D1.fake", "D2.real", "D2.fake"}, {"cgan.D1", "cgan.D2", "l1.cd3", "l1.cd8"}},
        {Variant::regression_mc, {}, {"l1.cd3", "l1.cd8"}},
    };
    REQUIRE(table.size() == all_variants().size());
    for (const auto& e : table) {
        CAPTURE(variant_config(e.v).name());
        Trainer t(tiny_config(e.v, 5));
        const auto r = t.train_step(b, 0.0);
        CHECK(names(r.discriminator_terms) == e.d_terms);
        CHECK(names(r.generator_terms) == e.g_terms);
        CHECK(std::isfinite(r.generator_loss));
        CHECK(std::isfinite(r.discriminator_loss));
        // Lambda sensitivity: the objective is affine in lambda with slope l1_cd3 + l1_cd8.
        CHECK(r.objective(r.lambda) == doctest::Approx(r.generator_loss).epsilon(1e-12));
        CHECK(r.objective(0.0) - r.objective(1.0) == doctest::Approx(-(r.l1_cd3 + r.l1_cd8)).epsilon(1e-9));
        if (e.v == Variant::regression_mc)
            CHECK(r.objective(0.0) == 0.0);
        else
            CHECK(r.objective(0.0) > 0.0);
        CHECK(t.step_count() == 1);
    }
}

TEST_CASE("compositing switch")
{
    const auto data = tiny_dataset(12, 32);
    const Batch b = fixed_batch(data, 4);
    Trainer with(tiny_config(Variant::mcd, 5));
    Trainer without(tiny_config(Variant::md, 5));
    CHECK(with.train_step(b, 0.0).beta == 0.0);
    CHECK(without.train_step(b, 0.0).beta == 1.0);
}

TEST_CASE("a training step is reproducible")
{
    const auto data = tiny_dataset(12, 32);
    const Batch b = fixed_batch(data, 4);
    Trainer a(tiny_config(Variant::mcd, 5));
    Trainer c(tiny_config(Variant::mcd, 5));
    for (int i = 0; i < 2; ++i) {
        const auto ra = a.train_step(b, 0.5 * i);
        const auto rc = c.train_step(b, 0.5 * i);
        CHECK(ra.generator_loss == rc.generator_loss);
        CHECK(ra.discriminator_loss == rc.discriminator_loss);
        CHECK(ra.l1_cd8 == rc.l1_cd8);
    }
    auto pa = a.generator().parameters();
    auto pc = c.generator().parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i]->value == pc[i]->value);
}

TEST_CASE("a heavily weighted L1 step descends on a frozen batch")
{
    const auto data = tiny_dataset(12, 32);
    const Batch b = fixed_batch(data, 4);
    auto cfg = tiny_config(Variant::mcd, 5);
    cfg.lambda_l1 = 1e6;
    cfg.base_lr = 2e-5;
    Trainer t(cfg);
    // Same dropout masks and code input as the step itself.
    const std::uint64_t dseed = mix_seed(derive_seed(cfg.seed, "dropout"), 0);
    auto l1_now = [&] {
        const auto p = t.generator().forward(b.x, CodeInput<float>::composite(b.y1, 0.0), true, dseed);
        return l1_loss(p.cd3(), b.y1) + l1_loss(p.cd8(), b.y2);
    };
    const double before = l1_now();
    const auto r = t.train_step(b, 0.0);
    CHECK(r.l1_cd3 + r.l1_cd8 == doctest::Approx(before).epsilon(1e-6));
    CHECK(l1_now() < before);
}

TEST_CASE("non-finite losses abort the step")
{
    const auto data = tiny_dataset(12, 32);
    Batch b = fixed_batch(data, 4);
    b.y2[0] = std::numeric_limits<float>::quiet_NaN();
    Trainer t(tiny_config(Variant::mc, 5));
    const auto before = t.generator().parameters()[0]->value;
    CHECK_THROWS_AS(t.train_step(b, 0.0), NonFiniteLoss);
    CHECK(t.generator().parameters()[0]->value == before);
    CHECK(t.step_count() == 0);
}

TEST_CASE("epoch order is a seeded permutation")
{
    const auto a = epoch_order(50, 9, 3);
    CHECK(a == epoch_order(50, 9, 3));
    CHECK(a != epoch_order(50, 9, 4));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        CHECK(sorted[i] == i);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run")
{
    const auto data = tiny_dataset();
    const auto cfg = tiny_config(Variant::mcd);

    Trainer full(cfg);
    LoopOptions opts;
    opts.checkpoint_dir = scratch_dir("full");
    opts.metrics_path = opts.checkpoint_dir / "metrics.jsonl";
    const auto uninterrupted = train_loop(full, data, opts);
    REQUIRE(uninterrupted.epochs.size() == 2);
    CHECK(std::filesystem::exists(opts.checkpoint_dir / "epoch_001.ckpt"));
    CHECK(std::filesystem::exists(opts.checkpoint_dir / "epoch_002.ckpt"));
    CHECK(uninterrupted.epochs[0].steps == 2);

    {
        Trainer first(cfg);
        LoopOptions o;
        o.checkpoint_dir = scratch_dir("part");
        o.stop_after_epoch = 1;
        const auto part = train_loop(first, data, o);
        REQUIRE(part.epochs.size() == 1);
        CHECK(part.epochs[0].generator_loss == uninterrupted.epochs[0].generator_loss);
    }
    Trainer resumed(cfg);
    resumed.load_checkpoint(scratch_dir("unused").parent_path() / "hgan_test_train_part" / "epoch_001.ckpt");
    CHECK(resumed.epochs_done() == 1);
    CHECK(resumed.step_count() == 2);
    const auto rest = train_loop(resumed, data);
    REQUIRE(rest.epochs.size() == 1);
    CHECK(rest.epochs[0].epoch == 2);
    CHECK(rest.epochs[0].generator_loss == uninterrupted.epochs[1].generator_loss);
    CHECK(rest.epochs[0].discriminator_loss == uninterrupted.epochs[1].discriminator_loss);
    CHECK(rest.epochs[0].l1_cd3 == uninterrupted.epochs[1].l1_cd3);
    CHECK(rest.epochs[0].l1_cd8 == uninterrupted.epochs[1].l1_cd8);
    auto pa = full.generator().parameters();
    auto pb = resumed.generator().parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i]->value == pb[i]->value);

    const auto recorded = checkpoint_config(opts.checkpoint_dir / "epoch_002.ckpt");
    CHECK(recorded.variant == Variant::mcd);
    CHECK(recorded.seed == cfg.seed);
}

TEST_CASE("checkpoints refuse another architecture")
{
    const auto dir = scratch_dir("mismatch");
    Trainer a(tiny_config(Variant::mcd, 5));
    a.save_checkpoint(dir / "a.ckpt");
    Trainer b(tiny_config(Variant::mc, 5));
    CHECK_THROWS_AS(b.load_checkpoint(dir / "a.ckpt"), ResumeMismatch);
    Trainer deeper(tiny_config(Variant::mcd, 6));
    CHECK_THROWS_AS(deeper.load_checkpoint(dir / "a.ckpt"), ResumeMismatch);
    CHECK_THROWS_AS(b.load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("degenerate loops")
{
    auto data = tiny_dataset(12, 32);
    auto zero = tiny_config(Variant::mcd, 5);
    zero.total_epochs = 0;
    zero.decay_start_epoch = 0;
    Trainer t0(zero);
    LoopOptions o;
    o.checkpoint_dir = scratch_dir("zero");
    const auto r = train_loop(t0, data, o);
    CHECK(r.epochs.empty());
    REQUIRE(r.checkpoints.size() == 1);
    CHECK(r.checkpoints[0].filename() == "epoch_000.ckpt");
    CHECK(t0.step_count() == 0);

    for (auto& s : data.samples)
        s.split = Split::test;
    Trainer t1(tiny_config(Variant::mcd, 5));
    CHECK_THROWS_AS(train_loop(t1, data), EmptyDataset);
    CHECK_THROWS_AS(train_loop(t1, Dataset{}), EmptyDataset);
}
