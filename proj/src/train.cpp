#include "hgan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hgan/config.hpp"
#include "hgan/preprocess.hpp"
#include "hgan/rng.hpp"

namespace hgan {

// ---------------------------------------------------------------------------
// Schedules

CompositeSchedule::CompositeSchedule() : steepness(std::log(99.0) / 2.0) {}

CompositeSchedule CompositeSchedule::scaled(double scale)
{
    if (!(scale > 0.0))
        throw std::invalid_argument("schedule scale must be positive");
    CompositeSchedule s;
    s.start_epoch *= scale;
    s.mid_epoch *= scale;
    s.end_epoch *= scale;
    s.steepness /= scale;
    return s;
}

void CompositeSchedule::validate() const
{
    if (!(start_epoch < mid_epoch && mid_epoch < end_epoch))
        throw std::invalid_argument("compositing schedule needs start < mid < end");
    if (!(steepness > 0.0))
        throw std::invalid_argument("compositing steepness must be positive");
}

double beta(const CompositeSchedule& s, double t)
{
    if (t <= s.start_epoch)
        return 0.0;
    if (t >= s.end_epoch)
        return 1.0;
    return 1.0 / (1.0 + std::exp(-s.steepness * (t - s.mid_epoch)));
}

TrainConfig TrainConfig::for_variant(Variant v)
{
    TrainConfig c;
    c.apply_variant(v);
    return c;
}

void TrainConfig::apply_variant(Variant v)
{
    const auto vc = variant_config(v);
    variant = v;
    topology = vc.topology;
    compositing = vc.compositing;
    discriminator_mode = vc.discriminator_mode;
    regression = vc.regression;
}

void TrainConfig::scale_schedules_to_epochs()
{
    const double scale = total_epochs / 30.0;
    schedule = CompositeSchedule::scaled(scale);
    decay_start_epoch = 20.0 * scale;
}

GeneratorSpec TrainConfig::generator_spec() const
{
    auto s = GeneratorSpec::with_depth(depth, topology);
    s.leaky_encoder = leaky_encoder;
    return s;
}

DiscriminatorSpec TrainConfig::discriminator_spec() const
{
    DiscriminatorSpec s;
    s.mode = discriminator_mode;
    return s;
}

int TrainConfig::discriminator_count() const
{
    if (regression)
        return 0;
    return discriminator_mode == DiscriminatorMode::joint ? 1 : 2;
}

void TrainConfig::validate() const
{
    if (batch_size < 1)
        throw std::invalid_argument("batch_size must be positive");
    if (total_epochs < 0)
        throw std::invalid_argument("total_epochs must be non-negative");
    if (total_epochs > 0 && !(decay_start_epoch < total_epochs))
        throw std::invalid_argument("decay_start_epoch must be smaller than total_epochs");
    if (!(lambda_l1 >= 0.0))
        throw std::invalid_argument("lambda_l1 must be non-negative");
    if (!(base_lr >= 0.0))
        throw std::invalid_argument("base_lr must be non-negative");
    if (topology == GeneratorTopology::single_path)
        throw std::invalid_argument("training needs a two-stain generator topology");
    if (regression && discriminator_mode == DiscriminatorMode::joint)
        throw std::invalid_argument("regression mode has no discriminator to make joint");
    schedule.validate();
}

double learning_rate(const TrainConfig& c, double t)
{
    if (t <= c.decay_start_epoch)
        return c.base_lr;
    const double span = c.total_epochs - c.decay_start_epoch;
    return std::max(0.0, c.base_lr * (c.total_epochs - t) / span);
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
double bce_with_logits(const Tensor<T>& logits, double label, Tensor<T>* grad, double grad_scale)
{
    const std::size_t n = logits.size();
    if (n == 0)
        throw std::invalid_argument("empty score map");
    if (grad)
        *grad = Tensor<T>(logits.shape());
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits[i];
        const double p_raw = 1.0 / (1.0 + std::exp(-z));
        const double p = std::clamp(p_raw, kScoreClamp, 1.0 - kScoreClamp);
        sum += -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
        if (grad) {
            const bool clamped = p_raw <= kScoreClamp || p_raw >= 1.0 - kScoreClamp;
            (*grad)[i] = clamped ? T(0) : static_cast<T>((p - label) * inv_n * grad_scale);
        }
    }
    return sum * inv_n;
}

double CganLoss::discriminator() const
{
    double s = 0.0;
    for (const auto& t : discriminator_terms)
        s += t.weighted();
    return s;
}

double CganLoss::generator() const
{
    double s = 0.0;
    for (const auto& t : generator_terms)
        s += t.weighted();
    return s;
}

namespace {

CganLoss cgan_loss(std::span<const ScorePair> pairs, std::span<const std::string> names)
{
    CganLoss out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].real || !pairs[i].fake)
            throw std::invalid_argument("missing score map");
        out.discriminator_terms.push_back({names[i] + ".real", bce_with_logits(*pairs[i].real, 1.0)});
        out.discriminator_terms.push_back({names[i] + ".fake", bce_with_logits(*pairs[i].fake, 0.0)});
        out.generator_terms.push_back({"cgan." + names[i], bce_with_logits(*pairs[i].fake, 1.0)});
    }
    return out;
}

}  // namespace

CganLoss cgan_loss_separate(std::span<const ScorePair> pairs)
{
    if (pairs.size() != 2)
        throw ModeMismatch("separate discriminators need two score pairs, got " + std::to_string(pairs.size()));
    const std::string names[] = {"D1", "D2"};
    return cgan_loss(pairs, names);
}

CganLoss cgan_loss_joint(std::span<const ScorePair> pairs)
{
    if (pairs.size() != 1)
        throw ModeMismatch("a joint discriminator needs one score pair, got " + std::to_string(pairs.size()));
    const std::string names[] = {"D"};
    return cgan_loss(pairs, names);
}

template <class T>
double l1_loss(const Tensor<T>& fake, const Tensor<T>& real, Tensor<T>* grad, double grad_scale)
{
    require_same_shape(fake.shape(), real.shape(), "l1_loss");
    const std::size_t n = fake.size();
    if (n == 0)
        return 0.0;
    if (grad)
        *grad = Tensor<T>(fake.shape());
    const T g = static_cast<T>(grad_scale / static_cast<double>(n));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(fake[i]) - real[i];
        sum += std::abs(d);
        if (grad)
            (*grad)[i] = d > 0 ? g : (d < 0 ? -g : T(0));
    }
    return sum / static_cast<double>(n);
}

template double bce_with_logits<float>(const Tensor<float>&, double, Tensor<float>*, double);
template double bce_with_logits<double>(const Tensor<double>&, double, Tensor<double>*, double);
template double l1_loss<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*, double);
template double l1_loss<double>(const Tensor<double>&, const Tensor<double>&, Tensor<double>*, double);

double total_generator_objective(double cgan_term, double l1_cd3, double l1_cd8, double lambda)
{
    if (!(lambda >= 0.0))
        throw std::invalid_argument("lambda must be non-negative");
    return cgan_term + lambda * (l1_cd3 + l1_cd8);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParamRefs<float> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps)
{
    for (auto* p : params_) {
        m_.emplace_back(p->size(), 0.0f);
        v_.emplace_back(p->size(), 0.0f);
        names_.push_back(p->name);
    }
}

void Adam::zero_grad()
{
    for (auto* p : params_)
        p->zero_grad();
}

void Adam::step(double lr)
{
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float b1 = static_cast<float>(beta1_);
    const float b2 = static_cast<float>(beta2_);
    const float eps = static_cast<float>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        float* w = params_[k]->value.data();
        const float* g = params_[k]->grad.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params_[k]->size());
#pragma omp parallel for simd schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
    }
}

BufferRefs<float> Adam::state()
{
    BufferRefs<float> out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        out.emplace_back("adam.m." + names_[k], &m_[k]);
        out.emplace_back("adam.v." + names_[k], &v_[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batches and steps

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices)
{
    if (indices.empty())
        throw std::invalid_argument("empty batch");
    const int side = samples[indices[0]].hoechst.width;
    const int n = static_cast<int>(indices.size());
    Batch b{Tensor<float>({1, n, side, side}), Tensor<float>({1, n, side, side}), Tensor<float>({1, n, side, side})};
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    for (int i = 0; i < n; ++i) {
        const Sample& s = samples[indices[static_cast<std::size_t>(i)]];
        if (s.hoechst.width != side || s.hoechst.height != side)
            throw ShapeMismatch("batch samples differ in size");
        const Image* src[] = {&s.hoechst, &s.cd3, &s.cd8};
        Tensor<float>* dst[] = {&b.x, &b.y1, &b.y2};
        for (int c = 0; c < 3; ++c) {
            float* out = dst[c]->data() + static_cast<std::size_t>(i) * plane;
            for (std::size_t k = 0; k < plane; ++k)
                out[k] = 2.0f * src[c]->data[k] - 1.0f;
        }
    }
    return b;
}

double StepReport::objective(double lambda) const
{
    double cgan = 0.0;
    for (const auto& t : generator_terms)
        if (t.name.rfind("cgan", 0) == 0)
            cgan += t.value;
    return total_generator_objective(cgan, l1_cd3, l1_cd8, lambda);
}

Trainer::Trainer(TrainConfig config) : config_((config.validate(), std::move(config))), g_(config_.generator_spec())
{
    const std::uint64_t init = derive_seed(config_.seed, "init");
    g_.init(init);
    const int nd = config_.discriminator_count();
    for (int i = 0; i < nd; ++i) {
        ds_.emplace_back(config_.discriminator_spec(), nd == 1 ? "D" : "D" + std::to_string(i + 1));
        ds_.back().init(mix_seed(init, 100 + static_cast<std::uint64_t>(i)));
    }
    g_opt_ = Adam(g_.parameters(), config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
    for (auto& d : ds_)
        d_opts_.emplace_back(d.parameters(), config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
}

std::uint64_t Trainer::eval_dropout_seed(std::uint64_t index) const
{
    return mix_seed(derive_seed(config_.seed, "eval-dropout"), index);
}

namespace {

bool finite(const std::vector<LossTerm>& terms)
{
    return std::all_of(terms.begin(), terms.end(), [](const LossTerm& t) { return std::isfinite(t.value); });
}

std::string describe(const StepReport& r)
{
    std::ostringstream os;
    os << "step " << r.step << " (epoch " << r.epoch << ", beta " << r.beta << ", lr " << r.lr << "):";
    for (const auto& t : r.discriminator_terms)
        os << ' ' << t.name << '=' << t.value;
    for (const auto& t : r.generator_terms)
        os << ' ' << t.name << '=' << t.value;
    return os.str();
}

void add_channel(Tensor<float>& acc, const Tensor<float>& src, int channel)
{
    const std::size_t plane = src.shape().plane();
    const float* s = src.channel(channel);
    float* d = acc.data();
    for (std::size_t i = 0; i < plane; ++i)
        d[i] += s[i];
}

}  // namespace

StepReport Trainer::train_step(const Batch& b, double t)
{
    StepReport r;
    r.step = step_;
    r.epoch = t;
    r.beta = config_.compositing ? beta(config_.schedule, t) : 1.0;
    r.lr = learning_rate(config_, t);
    r.lambda = config_.lambda_l1;

    const std::uint64_t dseed = mix_seed(derive_seed(config_.seed, "dropout"), step_);
    const auto code = config_.mutual() && config_.compositing ? CodeInput<float>::composite(b.y1, r.beta)
                                                              : CodeInput<float>::generated();
    const GeneratorPass<float> pass = g_.forward(b.x, code, true, dseed);
    const Tensor<float>& f1 = pass.cd3();
    const Tensor<float>& f2 = pass.cd8();

    // Discriminator inputs: Hoechst concatenated with stain(s); generator
    // outputs enter as constants during the discriminator update.
    std::vector<Tensor<float>> real_in;
    std::vector<Tensor<float>> fake_in;
    if (config_.discriminator_mode == DiscriminatorMode::joint) {
        real_in.push_back(concat_channels<float>({&b.x, &b.y1, &b.y2}));
        fake_in.push_back(concat_channels<float>({&b.x, &f1, &f2}));
    } else {
        real_in.push_back(concat_channels<float>({&b.x, &b.y1}));
        real_in.push_back(concat_channels<float>({&b.x, &b.y2}));
        fake_in.push_back(concat_channels<float>({&b.x, &f1}));
        fake_in.push_back(concat_channels<float>({&b.x, &f2}));
    }

    if (!ds_.empty()) {
        std::vector<DiscriminatorTrace<float>> real_tr;
        std::vector<DiscriminatorTrace<float>> fake_tr;
        std::vector<ScorePair> pairs;
        for (std::size_t i = 0; i < ds_.size(); ++i) {
            real_tr.push_back(ds_[i].forward(real_in[i], true));
            fake_tr.push_back(ds_[i].forward(fake_in[i], true));
        }
        for (std::size_t i = 0; i < ds_.size(); ++i)
            pairs.push_back({&real_tr[i].logits, &fake_tr[i].logits});
        const CganLoss loss = ds_.size() == 1 ? cgan_loss_joint(pairs) : cgan_loss_separate(pairs);
        r.discriminator_terms = loss.discriminator_terms;
        r.discriminator_loss = loss.discriminator();
        if (!finite(r.discriminator_terms))
            throw NonFiniteLoss("non-finite discriminator loss at " + describe(r));
        for (std::size_t i = 0; i < ds_.size(); ++i) {
            d_opts_[i].zero_grad();
            Tensor<float> dl;
            bce_with_logits(real_tr[i].logits, 1.0, &dl);
            ds_[i].backward(real_tr[i], dl, false, true);
            bce_with_logits(fake_tr[i].logits, 0.0, &dl);
            ds_[i].backward(fake_tr[i], dl, false, true);
            d_opts_[i].step(r.lr);
        }
    }

    // Generator update: adversarial gradient through the freshly updated
    // discriminators (their parameters untouched) plus weighted L1.
    Tensor<float> g1(f1.shape());
    Tensor<float> g2(f2.shape());
    for (std::size_t i = 0; i < ds_.size(); ++i) {
        const auto tr = ds_[i].forward(fake_in[i], true);
        Tensor<float> dl;
        const double v = bce_with_logits(tr.logits, 1.0, &dl);
        r.generator_terms.push_back({"cgan." + std::string(ds_.size() == 1 ? "D" : "D" + std::to_string(i + 1)), v});
        const Tensor<float> dx = ds_[i].backward(tr, dl, true, false);
        if (ds_.size() == 1) {
            add_channel(g1, dx, 1);
            add_channel(g2, dx, 2);
        } else {
            add_channel(i == 0 ? g1 : g2, dx, 1);
        }
    }
    Tensor<float> l1g;
    r.l1_cd3 = l1_loss(f1, b.y1, &l1g, config_.lambda_l1);
    kernels::axpy<float>(1.0f, l1g, g1);
    r.l1_cd8 = l1_loss(f2, b.y2, &l1g, config_.lambda_l1);
    kernels::axpy<float>(1.0f, l1g, g2);
    r.generator_terms.push_back({"l1.cd3", r.l1_cd3, config_.lambda_l1});
    r.generator_terms.push_back({"l1.cd8", r.l1_cd8, config_.lambda_l1});
    for (const auto& term : r.generator_terms)
        r.generator_loss += term.weighted();
    if (!finite(r.generator_terms) || !std::isfinite(r.generator_loss))
        throw NonFiniteLoss("non-finite generator loss at " + describe(r));

    g_opt_.zero_grad();
    g_.backward(pass, &g1, &g2, config_.backprop_through_cd3);
    g_opt_.step(r.lr);
    ++step_;
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string Trainer::spec_hash() const
{
    Json j{{"generator", g_.spec()},
           {"discriminator", config_.discriminator_spec()},
           {"discriminators", config_.discriminator_count()}};
    return fnv1a_hex(j.dump());
}

namespace {

constexpr char kMagic[8] = {'H', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

struct NamedBuffer {
    std::string name;
    std::vector<float>* data;
};

std::vector<NamedBuffer> checkpoint_tensors(Generator<float>& g, std::vector<Discriminator<float>>& ds, Adam& g_opt,
                                            std::vector<Adam>& d_opts)
{
    std::vector<NamedBuffer> out;
    for (auto* p : g.parameters())
        out.push_back({"G." + p->name, &p->value});
    for (auto& [name, buf] : g.buffers())
        out.push_back({"G." + name, buf});
    for (auto& [name, buf] : g_opt.state())
        out.push_back({"G." + name, buf});
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (auto* p : ds[i].parameters())
            out.push_back({p->name, &p->value});
        for (auto& [name, buf] : ds[i].buffers())
            out.push_back({name, buf});
        for (auto& [name, buf] : d_opts[i].state())
            out.push_back({ds.size() == 1 ? "D." + name : "D" + std::to_string(i + 1) + "." + name, buf});
    }
    return out;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path)
{
    const auto tensors = checkpoint_tensors(g_, ds_, g_opt_, d_opts_);
    Json dir = Json::array();
    for (const auto& t : tensors)
        dir.push_back(Json{{"name", t.name}, {"count", t.data->size()}});
    std::vector<std::uint64_t> d_steps;
    for (const auto& o : d_opts_)
        d_steps.push_back(o.steps());
    const Json header{{"format", "hgan-checkpoint/1"},
                      {"spec_hash", spec_hash()},
                      {"config", config_},
                      {"step", step_},
                      {"epochs_done", epochs_done_},
                      {"g_adam_steps", g_opt_.steps()},
                      {"d_adam_steps", d_steps},
                      {"tensors", dir}};
    const std::string text = header.dump();

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw CheckpointError("cannot write " + tmp.string());
        const std::uint64_t len = text.size();
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : tensors)
            out.write(reinterpret_cast<const char*>(t.data->data()),
                      static_cast<std::streamsize>(t.data->size() * sizeof(float)));
        if (!out)
            throw CheckpointError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

static Json read_checkpoint_header(const std::filesystem::path& path, std::ifstream& in)
{
    in.open(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1u << 30))
        throw CheckpointError(path.string() + " is not a checkpoint");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in)
        throw CheckpointError(path.string() + " is truncated");
    return Json::parse(text);
}

TrainConfig checkpoint_config(const std::filesystem::path& path)
{
    std::ifstream in;
    return read_checkpoint_header(path, in).at("config").get<TrainConfig>();
}

void Trainer::load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in;
    const Json header = read_checkpoint_header(path, in);
    if (header.at("spec_hash").get<std::string>() != spec_hash())
        throw ResumeMismatch("checkpoint " + path.string() + " was written for another architecture (spec hash " +
                             header.at("spec_hash").get<std::string>() + ", expected " + spec_hash() + ")");
    const auto tensors = checkpoint_tensors(g_, ds_, g_opt_, d_opts_);
    const auto& dir = header.at("tensors");
    if (dir.size() != tensors.size())
        throw ResumeMismatch("checkpoint tensor directory does not match the model");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (dir[i].at("name").get<std::string>() != tensors[i].name ||
            dir[i].at("count").get<std::size_t>() != tensors[i].data->size())
            throw ResumeMismatch("checkpoint tensor " + dir[i].at("name").get<std::string>() + " does not match " +
                                 tensors[i].name);
        in.read(reinterpret_cast<char*>(tensors[i].data->data()),
                static_cast<std::streamsize>(tensors[i].data->size() * sizeof(float)));
        if (!in)
            throw CheckpointError(path.string() + " is truncated");
    }
    step_ = header.at("step").get<std::uint64_t>();
    epochs_done_ = header.at("epochs_done").get<int>();
    g_opt_.set_steps(header.at("g_adam_steps").get<std::uint64_t>());
    const auto d_steps = header.at("d_adam_steps").get<std::vector<std::uint64_t>>();
    for (std::size_t i = 0; i < d_opts_.size() && i < d_steps.size(); ++i)
        d_opts_[i].set_steps(d_steps[i]);
}

// ---------------------------------------------------------------------------
// Loop

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace {

Json step_json(const StepReport& r)
{
    Json j{{"step", r.step},
           {"epoch", r.epoch},
           {"beta", r.beta},
           {"lr", r.lr},
           {"d_loss", r.discriminator_loss},
           {"g_loss", r.generator_loss},
           {"l1_cd3", r.l1_cd3},
           {"l1_cd8", r.l1_cd8}};
    for (const auto& t : r.discriminator_terms)
        j["terms"][t.name] = t.value;
    for (const auto& t : r.generator_terms)
        j["terms"][t.name] = t.value;
    return j;
}

std::string checkpoint_name(int epoch)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
    return buf;
}

}  // namespace

TrainResult train_loop(Trainer& trainer, const Dataset& data, const LoopOptions& options)
{
    const auto& cfg = trainer.config();
    const auto train_idx = data.indices(Split::train);
    if (train_idx.empty())
        throw EmptyDataset("training split is empty");

    TrainResult result;
    if (cfg.total_epochs == 0) {
        if (!options.checkpoint_dir.empty()) {
            const auto p = options.checkpoint_dir / checkpoint_name(0);
            trainer.save_checkpoint(p);
            result.checkpoints.push_back(p);
        }
        return result;
    }

    std::ofstream metrics;
    if (!options.metrics_path.empty()) {
        if (options.metrics_path.has_parent_path())
            std::filesystem::create_directories(options.metrics_path.parent_path());
        metrics.open(options.metrics_path, trainer.epochs_done() == 0 ? std::ios::trunc : std::ios::app);
        if (!metrics)
            throw std::runtime_error("cannot write metrics log " + options.metrics_path.string());
    }

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches = (train_idx.size() + bs - 1) / bs;
    const std::uint64_t data_seed = derive_seed(cfg.seed, "data");
    for (int e = trainer.epochs_done(); e < cfg.total_epochs; ++e) {
        if (options.stop_after_epoch >= 0 && e >= options.stop_after_epoch)
            break;
        const auto order = epoch_order(train_idx.size(), data_seed, e);
        EpochSummary sum;
        sum.epoch = e + 1;
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<std::size_t> idx;
            for (std::size_t k = b * bs; k < std::min(train_idx.size(), (b + 1) * bs); ++k)
                idx.push_back(train_idx[order[k]]);
            const Batch batch = make_batch(data.samples, idx);
            const double t = e + static_cast<double>(b) / static_cast<double>(batches);
            const StepReport r = trainer.train_step(batch, t);
            if (metrics)
                metrics << step_json(r).dump() << '\n';
            if (options.on_step)
                options.on_step(r);
            sum.discriminator_loss += r.discriminator_loss;
            sum.generator_loss += r.generator_loss;
            sum.l1_cd3 += r.l1_cd3;
            sum.l1_cd8 += r.l1_cd8;
            sum.beta_end = r.beta;
            sum.lr_end = r.lr;
            ++sum.steps;
        }
        const double n = static_cast<double>(sum.steps);
        sum.discriminator_loss /= n;
        sum.generator_loss /= n;
        sum.l1_cd3 /= n;
        sum.l1_cd8 /= n;
        trainer.set_epochs_done(e + 1);
        if (metrics)
            metrics.flush();
        if (!options.checkpoint_dir.empty()) {
            sum.checkpoint = options.checkpoint_dir / checkpoint_name(e + 1);
            trainer.save_checkpoint(sum.checkpoint);
            result.checkpoints.push_back(sum.checkpoint);
        }
        result.epochs.push_back(sum);
        if (options.on_epoch)
            options.on_epoch(sum, trainer);
    }
    return result;
}

}  // namespace hgan
