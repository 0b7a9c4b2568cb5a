#include "hgan/model.hpp"

#include <algorithm>
#include <cctype>

#include "hgan/kernels.hpp"

namespace hgan {

namespace {

constexpr double kDecoderSlope = 0.2;
const std::vector<int> kDefaultEncoder{64, 128, 256, 512, 512, 512, 512, 512};

template <class T>
void accumulate(Tensor<T>& acc, Tensor<T>&& g)
{
    if (acc.empty())
        acc = std::move(g);
    else
        kernels::axpy<T>(T(1), g, acc);
}

std::string upper(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

GeneratorSpec GeneratorSpec::with_depth(int depth, GeneratorTopology topology)
{
    if (depth < 2)
        throw SpecMismatch("generator depth must be at least 2");
    GeneratorSpec s;
    s.depth = depth;
    s.topology = topology;
    s.encoder_filters.clear();
    for (int i = 0; i < depth; ++i)
        s.encoder_filters.push_back(i < static_cast<int>(kDefaultEncoder.size()) ? kDefaultEncoder[i] : 512);
    s.d1_filters.assign(s.encoder_filters.rbegin() + 1, s.encoder_filters.rend());
    s.d2_filters = s.d1_filters;
    if (topology == GeneratorTopology::mutual)
        for (auto& f : s.d2_filters)
            f *= 2;
    s.dropout_blocks = std::min(4, depth - 1);
    return s;
}

void GeneratorSpec::validate() const
{
    const auto positive = [](const std::vector<int>& v) {
        return std::all_of(v.begin(), v.end(), [](int f) { return f > 0; });
    };
    if (depth < 2 || depth > 12)
        throw SpecMismatch("generator depth must lie in [2, 12], got " + std::to_string(depth));
    if (static_cast<int>(encoder_filters.size()) != depth)
        throw SpecMismatch("encoder_filters has " + std::to_string(encoder_filters.size()) + " entries, depth is " +
                           std::to_string(depth));
    if (static_cast<int>(d1_filters.size()) != depth - 1)
        throw SpecMismatch("d1_filters must have depth-1 entries");
    if (has_cd8() && static_cast<int>(d2_filters.size()) != depth - 1)
        throw SpecMismatch("d2_filters must have depth-1 entries");
    if (!positive(encoder_filters) || !positive(d1_filters) || (has_cd8() && !positive(d2_filters)))
        throw SpecMismatch("filter counts must be positive");
    if (mutual())
        for (int i = 0; i < std::max(0, depth - 3); ++i)
            if (d2_filters[i] != 2 * d1_filters[i])
                throw SpecMismatch("mutual d2_filters must double d1_filters (entry " + std::to_string(i) + ")");
    if (dropout_blocks < 0 || dropout_blocks > depth - 1)
        throw SpecMismatch("dropout_blocks must lie in [0, depth-1]");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw SpecMismatch("dropout_rate must lie in [0, 1)");
    if (in_channels <= 0 || out_channels <= 0)
        throw SpecMismatch("channel counts must be positive");
}

void DiscriminatorSpec::validate() const
{
    if (filters.size() < 2)
        throw SpecMismatch("discriminator needs at least two blocks");
    if (!std::all_of(filters.begin(), filters.end(), [](int f) { return f > 0; }))
        throw SpecMismatch("discriminator filter counts must be positive");
}

std::vector<ConvGeometry> discriminator_geometry(const DiscriminatorSpec& spec)
{
    std::vector<ConvGeometry> chain;
    const int blocks = static_cast<int>(spec.filters.size());
    for (int i = 0; i < blocks; ++i)
        chain.push_back(ConvGeometry{4, i + 1 < blocks ? 2 : 1, 1});
    chain.push_back(ConvGeometry{4, 1, 1});
    return chain;
}

int receptive_field(std::span<const ConvGeometry> chain)
{
    // Walk back from one output unit: each layer widens the window by
    // (k - 1) input steps of the accumulated stride.
    int field = 1;
    int jump = 1;
    for (const auto& g : chain) {
        field += (g.kernel - 1) * jump;
        jump *= g.stride;
    }
    return field;
}

int receptive_field(const DiscriminatorSpec& spec)
{
    const auto chain = discriminator_geometry(spec);
    return receptive_field(chain);
}

// ---------------------------------------------------------------------------
// Parameter counting

std::vector<LayerCount> layer_counts(const GeneratorSpec& spec)
{
    spec.validate();
    std::vector<LayerCount> out;
    const int depth = spec.depth;
    const auto& enc = spec.encoder_filters;
    const auto encoder = [&](const std::string& name) {
        for (int i = 0; i < depth; ++i) {
            const int in = i == 0 ? spec.in_channels : enc[i - 1];
            const bool norm = i > 0 && i < depth - 1;
            out.push_back({name + ".block" + std::to_string(i), std::size_t(in) * enc[i] * 16, 0,
                           norm ? std::size_t(2 * enc[i]) : 0});
        }
    };
    const auto decoder = [&](const std::string& name, const std::vector<int>& filters, int sources) {
        for (int j = 0; j < depth - 1; ++j) {
            const int in = j == 0 ? sources * enc[depth - 1] : filters[j - 1] + sources * enc[depth - 1 - j];
            out.push_back(
                {name + ".block" + std::to_string(j), std::size_t(in) * filters[j] * 16, 0, std::size_t(2 * filters[j])});
        }
        const int in = filters[depth - 2] + sources * enc[0];
        out.push_back({name + ".output", std::size_t(in) * spec.out_channels * 16, std::size_t(spec.out_channels), 0});
    };
    encoder("e1");
    decoder("d1", spec.d1_filters, 1);
    switch (spec.topology) {
    case GeneratorTopology::single_path:
        break;
    case GeneratorTopology::shared:
        decoder("d2", spec.d2_filters, 1);
        break;
    case GeneratorTopology::mutual:
        encoder("e2");
        decoder("d2", spec.d2_filters, 2);
        break;
    case GeneratorTopology::pair:
        encoder("e2");
        decoder("d2", spec.d2_filters, 1);
        break;
    }
    return out;
}

std::vector<LayerCount> layer_counts(const DiscriminatorSpec& spec, const std::string& prefix)
{
    spec.validate();
    std::vector<LayerCount> out;
    int in = spec.in_channels();
    const int blocks = static_cast<int>(spec.filters.size());
    for (int i = 0; i < blocks; ++i) {
        const int f = spec.filters[i];
        out.push_back({prefix + ".block" + std::to_string(i), std::size_t(in) * f * 16, i == 0 ? std::size_t(f) : 0,
                       i == 0 ? 0 : std::size_t(2 * f)});
        in = f;
    }
    out.push_back({prefix + ".score", std::size_t(in) * 16, 1, 0});
    return out;
}

std::string VariantConfig::name() const
{
    switch (variant) {
    case Variant::mcd: return "HoechstGAN-MCD";
    case Variant::mc: return "HoechstGAN-MC";
    case Variant::md: return "HoechstGAN-MD";
    case Variant::m: return "HoechstGAN-M";
    case Variant::d: return "HoechstGAN-D";
    case Variant::pix2pix: return "pix2pix";
    case Variant::regression_mc: return "Regression-MC";
    }
    return "?";
}

int VariantConfig::discriminator_count() const
{
    if (regression)
        return 0;
    return discriminator_mode == DiscriminatorMode::joint ? 1 : 2;
}

VariantConfig variant_config(Variant v)
{
    using enum GeneratorTopology;
    using enum DiscriminatorMode;
    switch (v) {
    case Variant::mcd: return {v, mutual, true, joint, false};
    case Variant::mc: return {v, mutual, true, separate, false};
    case Variant::md: return {v, mutual, false, joint, false};
    case Variant::m: return {v, mutual, false, separate, false};
    case Variant::d: return {v, shared, false, joint, false};
    case Variant::pix2pix: return {v, pair, false, separate, false};
    case Variant::regression_mc: return {v, mutual, true, separate, true};
    }
    throw UnknownVariant("unknown variant");
}

Variant parse_variant(const std::string& name)
{
    std::string s = upper(name);
    if (s.rfind("HOECHSTGAN-", 0) == 0)
        s = s.substr(11);
    if (s == "MCD") return Variant::mcd;
    if (s == "MC") return Variant::mc;
    if (s == "MD") return Variant::md;
    if (s == "M") return Variant::m;
    if (s == "D") return Variant::d;
    if (s == "PIX2PIX" || s == "PIX2PIX-PAIR") return Variant::pix2pix;
    if (s == "REGRESSION-MC" || s == "REGRESSION") return Variant::regression_mc;
    throw UnknownVariant("unknown variant '" + name + "'");
}

std::vector<Variant> all_variants()
{
    return {Variant::mcd, Variant::mc, Variant::md, Variant::m, Variant::d, Variant::pix2pix, Variant::regression_mc};
}

ParameterBreakdown count_parameters(Variant v, int depth)
{
    const VariantConfig cfg = variant_config(v);
    ParameterBreakdown out;
    out.layers = layer_counts(GeneratorSpec::with_depth(depth, cfg.topology));
    DiscriminatorSpec ds;
    ds.mode = cfg.discriminator_mode;
    if (cfg.discriminator_count() == 2) {
        for (const char* name : {"D1", "D2"}) {
            auto l = layer_counts(ds, name);
            out.layers.insert(out.layers.end(), l.begin(), l.end());
        }
    } else if (cfg.discriminator_count() == 1) {
        auto l = layer_counts(ds, "D");
        out.layers.insert(out.layers.end(), l.begin(), l.end());
    }
    for (const auto& l : out.layers)
        out.total += l.total();
    return out;
}

// ---------------------------------------------------------------------------
// Encoder

template <class T>
Encoder<T>::Encoder(const std::string& name, const GeneratorSpec& spec)
    : slope_(spec.leaky_encoder ? T(0.2) : T(0))
{
    const auto& f = spec.encoder_filters;
    for (int i = 0; i < spec.depth; ++i) {
        const std::string block = name + ".block" + std::to_string(i);
        convs_.emplace_back(block + ".conv", i == 0 ? spec.in_channels : f[i - 1], f[i], ConvGeometry{4, 2, 1}, false);
        if (i > 0 && i < spec.depth - 1)
            norms_.emplace_back(BatchNorm2d<T>(block + ".norm", f[i]));
        else
            norms_.emplace_back(std::nullopt);
    }
}

template <class T>
EncoderTrace<T> Encoder<T>::forward(const Tensor<T>& x, bool train)
{
    const std::size_t n = convs_.size();
    EncoderTrace<T> tr;
    tr.input = x;
    tr.pre_norm.resize(n);
    tr.norm.resize(n);
    tr.features.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor<T>& in = i == 0 ? tr.input : tr.features[i - 1];
        Tensor<T> y = convs_[i].forward(in);
        if (norms_[i]) {
            tr.pre_norm[i] = std::move(y);
            y = norms_[i]->forward(tr.pre_norm[i], train, tr.norm[i]);
        }
        kernels::leaky_relu_forward<T>(y, slope_);
        tr.features[i] = std::move(y);
    }
    return tr;
}

template <class T>
Tensor<T> Encoder<T>::backward(const EncoderTrace<T>& tr, std::vector<Tensor<T>>& dfeatures, bool need_dx)
{
    const int n = static_cast<int>(convs_.size());
    dfeatures.resize(n);
    int deepest = -1;
    for (int i = n - 1; i >= 0 && deepest < 0; --i)
        if (!dfeatures[i].empty())
            deepest = i;
    if (deepest < 0)
        return {};
    Tensor<T> dx;
    for (int i = deepest; i >= 0; --i) {
        if (dfeatures[i].empty())
            dfeatures[i] = Tensor<T>(tr.features[i].shape());
        Tensor<T> g = std::move(dfeatures[i]);
        kernels::leaky_relu_backward<T>(tr.features[i], slope_, g);
        if (norms_[i])
            g = norms_[i]->backward(tr.pre_norm[i], tr.norm[i], g);
        const Tensor<T>& in = i == 0 ? tr.input : tr.features[i - 1];
        Tensor<T> din = convs_[i].backward(in, g, i > 0 || need_dx);
        if (i > 0)
            accumulate(dfeatures[i - 1], std::move(din));
        else
            dx = std::move(din);
    }
    return dx;
}

template <class T>
void Encoder<T>::init(Rng& rng)
{
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].init(rng);
        if (norms_[i])
            norms_[i]->init(rng);
    }
}

template <class T>
void Encoder<T>::collect(ParamRefs<T>& out)
{
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(out);
        if (norms_[i])
            norms_[i]->collect(out);
    }
}

template <class T>
void Encoder<T>::collect_buffers(BufferRefs<T>& out)
{
    for (auto& n : norms_)
        if (n)
            n->collect_buffers(out);
}

// ---------------------------------------------------------------------------
// Decoder

template <class T>
Decoder<T>::Decoder(const std::string& name, const GeneratorSpec& spec, std::span<const int> filters, int sources)
    : sources_(sources), dropout_blocks_(spec.dropout_blocks), dropout_rate_(spec.dropout_rate)
{
    const int depth = spec.depth;
    const auto& enc = spec.encoder_filters;
    skip_widths_.assign(depth, 0);
    for (int j = 0; j < depth - 1; ++j) {
        const int in = j == 0 ? sources * enc[depth - 1] : filters[j - 1] + sources * enc[depth - 1 - j];
        const std::string block = name + ".block" + std::to_string(j);
        deconvs_.emplace_back(block + ".deconv", in, filters[j], ConvGeometry{4, 2, 1}, false);
        norms_.emplace_back(block + ".norm", filters[j]);
        skip_widths_[j] = enc[depth - 1 - j];
    }
    skip_widths_[depth - 1] = enc[0];
    output_ = ConvTranspose2d<T>(name + ".output", filters[depth - 2] + sources * enc[0], spec.out_channels,
                                 ConvGeometry{4, 2, 1}, true);
}

template <class T>
DecoderTrace<T> Decoder<T>::forward(std::span<const EncoderTrace<T>* const> sources, bool train,
                                    std::uint64_t dropout_seed)
{
    if (static_cast<int>(sources.size()) != sources_)
        throw ShapeMismatch("decoder expects " + std::to_string(sources_) + " source encoders");
    const int stages = static_cast<int>(deconvs_.size());
    const int depth = stages + 1;
    DecoderTrace<T> tr;
    tr.dropout_seed = dropout_seed;
    tr.inputs.resize(depth);
    tr.pre_norm.resize(stages);
    tr.norm.resize(stages);
    tr.outputs.resize(stages);

    std::vector<const Tensor<T>*> parts;
    for (int j = 0; j <= stages; ++j) {
        parts.clear();
        if (j > 0)
            parts.push_back(&tr.outputs[j - 1]);
        for (const auto* s : sources)
            parts.push_back(&s->features[depth - 1 - j]);
        tr.inputs[j] = concat_channels<T>(std::span<const Tensor<T>* const>(parts));
        if (j == stages)
            break;
        tr.pre_norm[j] = deconvs_[j].forward(tr.inputs[j]);
        Tensor<T> y = norms_[j].forward(tr.pre_norm[j], train, tr.norm[j]);
        if (j < dropout_blocks_)
            kernels::dropout_forward<T>(y, mix_seed(dropout_seed, j), dropout_rate_);
        kernels::leaky_relu_forward<T>(y, T(kDecoderSlope));
        tr.outputs[j] = std::move(y);
    }
    tr.output = output_.forward(tr.inputs[stages]);
    kernels::tanh_forward<T>(tr.output);
    return tr;
}

template <class T>
void Decoder<T>::backward(const DecoderTrace<T>& tr, const Tensor<T>& dy,
                          std::span<std::vector<Tensor<T>>* const> dsources)
{
    require_same_shape(dy.shape(), tr.output.shape(), "decoder backward");
    const int stages = static_cast<int>(deconvs_.size());
    const int depth = stages + 1;
    for (auto* d : dsources)
        d->resize(depth);

    // Splits the gradient of a concatenated stage input into its parts.
    const auto scatter = [&](const Tensor<T>& din, int j, int lead) -> Tensor<T> {
        Tensor<T> g_prev = lead > 0 ? slice_channels(din, 0, lead) : Tensor<T>();
        int offset = lead;
        const int width = j == 0 ? din.channels() / sources_ : skip_widths_[j];
        for (int s = 0; s < sources_; ++s) {
            accumulate((*dsources[s])[depth - 1 - j], slice_channels(din, offset, width));
            offset += width;
        }
        return g_prev;
    };

    Tensor<T> g = dy;
    kernels::tanh_backward<T>(tr.output, g);
    Tensor<T> din = output_.backward(tr.inputs[stages], g, true);
    g = scatter(din, stages, deconvs_[stages - 1].out_channels());
    for (int j = stages - 1; j >= 0; --j) {
        kernels::leaky_relu_backward<T>(tr.outputs[j], T(kDecoderSlope), g);
        if (j < dropout_blocks_)
            kernels::dropout_backward<T>(g, mix_seed(tr.dropout_seed, j), dropout_rate_);
        g = norms_[j].backward(tr.pre_norm[j], tr.norm[j], g);
        din = deconvs_[j].backward(tr.inputs[j], g, true);
        g = scatter(din, j, j == 0 ? 0 : deconvs_[j - 1].out_channels());
    }
}

template <class T>
void Decoder<T>::init(Rng& rng)
{
    for (std::size_t j = 0; j < deconvs_.size(); ++j) {
        deconvs_[j].init(rng);
        norms_[j].init(rng);
    }
    output_.init(rng);
}

template <class T>
void Decoder<T>::collect(ParamRefs<T>& out)
{
    for (std::size_t j = 0; j < deconvs_.size(); ++j) {
        deconvs_[j].collect(out);
        norms_[j].collect(out);
    }
    output_.collect(out);
}

template <class T>
void Decoder<T>::collect_buffers(BufferRefs<T>& out)
{
    for (auto& n : norms_)
        n.collect_buffers(out);
}

// ---------------------------------------------------------------------------
// Generator

template <class T>
Generator<T>::Generator(GeneratorSpec spec) : spec_(std::move(spec))
{
    spec_.validate();
    e1_ = Encoder<T>("e1", spec_);
    d1_ = Decoder<T>("d1", spec_, spec_.d1_filters, 1);
    switch (spec_.topology) {
    case GeneratorTopology::single_path:
        break;
    case GeneratorTopology::shared:
        d2_.emplace("d2", spec_, spec_.d2_filters, 1);
        break;
    case GeneratorTopology::mutual:
        e2_.emplace("e2", spec_);
        d2_.emplace("d2", spec_, spec_.d2_filters, 2);
        break;
    case GeneratorTopology::pair:
        e2_.emplace("e2", spec_);
        d2_.emplace("d2", spec_, spec_.d2_filters, 1);
        break;
    }
}

template <class T>
void Generator<T>::check_input(const Tensor<T>& x) const
{
    const int side = spec_.input_side();
    if (x.channels() != spec_.in_channels || x.height() != side || x.width() != side)
        throw ShapeMismatch("generator expects (" + std::to_string(spec_.in_channels) + ", n, " +
                            std::to_string(side) + ", " + std::to_string(side) + "), got " + x.shape().str());
}

template <class T>
GeneratorPass<T> Generator<T>::forward(const Tensor<T>& x, const CodeInput<T>& code, bool train,
                                       std::uint64_t dropout_seed)
{
    check_input(x);
    GeneratorPass<T> pass;
    pass.code = code;
    pass.e1 = e1_.forward(x, train);
    const EncoderTrace<T>* e1 = &pass.e1;
    pass.d1 = d1_.forward(std::span(&e1, 1), train, mix_seed(dropout_seed, 1));
    switch (spec_.topology) {
    case GeneratorTopology::single_path:
        break;
    case GeneratorTopology::shared:
        pass.d2 = d2_->forward(std::span(&e1, 1), train, mix_seed(dropout_seed, 2));
        break;
    case GeneratorTopology::mutual: {
        switch (code.kind) {
        case CodeInput<T>::Kind::generated:
            pass.code_input = pass.d1.output;
            break;
        case CodeInput<T>::Kind::composite:
            pass.code_input = composite(pass.d1.output, *code.image, code.beta);
            break;
        case CodeInput<T>::Kind::provided:
            require_same_shape(code.image->shape(), x.shape(), "e2 input");
            pass.code_input = *code.image;
            break;
        }
        pass.e2 = e2_->forward(pass.code_input, train);
        const EncoderTrace<T>* both[] = {&pass.e1, &pass.e2};
        pass.d2 = d2_->forward(both, train, mix_seed(dropout_seed, 2));
        break;
    }
    case GeneratorTopology::pair: {
        pass.e2 = e2_->forward(x, train);
        const EncoderTrace<T>* e2 = &pass.e2;
        pass.d2 = d2_->forward(std::span(&e2, 1), train, mix_seed(dropout_seed, 2));
        break;
    }
    }
    return pass;
}

template <class T>
Tensor<T> Generator<T>::backward(const GeneratorPass<T>& pass, const Tensor<T>* d_cd3, const Tensor<T>* d_cd8,
                                 bool backprop_through_cd3, bool need_dx)
{
    std::vector<Tensor<T>> de1;
    std::vector<Tensor<T>> de2;
    Tensor<T> g1 = d_cd3 ? *d_cd3 : Tensor<T>();
    Tensor<T> dx;

    if (d_cd8 && d2_) {
        switch (spec_.topology) {
        case GeneratorTopology::single_path:
            break;
        case GeneratorTopology::shared: {
            std::vector<Tensor<T>>* dst = &de1;
            d2_->backward(pass.d2, *d_cd8, std::span(&dst, 1));
            break;
        }
        case GeneratorTopology::mutual: {
            std::vector<Tensor<T>>* dst[] = {&de1, &de2};
            d2_->backward(pass.d2, *d_cd8, dst);
            const bool through = backprop_through_cd3 && pass.code.kind != CodeInput<T>::Kind::provided;
            Tensor<T> dcode = e2_->backward(pass.e2, de2, through);
            if (through && !dcode.empty()) {
                const double w = pass.code.kind == CodeInput<T>::Kind::composite ? pass.code.beta : 1.0;
                if (g1.empty())
                    g1 = Tensor<T>(dcode.shape());
                kernels::axpy<T>(static_cast<T>(w), dcode, g1);
            }
            break;
        }
        case GeneratorTopology::pair: {
            std::vector<Tensor<T>>* dst = &de2;
            d2_->backward(pass.d2, *d_cd8, std::span(&dst, 1));
            dx = e2_->backward(pass.e2, de2, need_dx);
            break;
        }
        }
    }
    if (!g1.empty()) {
        std::vector<Tensor<T>>* dst = &de1;
        d1_.backward(pass.d1, g1, std::span(&dst, 1));
    }
    Tensor<T> dx1 = e1_.backward(pass.e1, de1, need_dx);
    if (need_dx && !dx1.empty())
        accumulate(dx, std::move(dx1));
    return dx;
}

template <class T>
Tensor<T> Generator<T>::forward_g1(const Tensor<T>& x, bool train, std::uint64_t dropout_seed)
{
    check_input(x);
    EncoderTrace<T> e1 = e1_.forward(x, train);
    const EncoderTrace<T>* src = &e1;
    return d1_.forward(std::span(&src, 1), train, mix_seed(dropout_seed, 1)).output;
}

template <class T>
Tensor<T> Generator<T>::forward_g2(const Tensor<T>& x, const Tensor<T>& cd3_input, bool train,
                                   std::uint64_t dropout_seed)
{
    if (!spec_.mutual())
        throw NotMutual("forward_g2 requires a mutual generator (encoder e2 is absent)");
    check_input(x);
    require_same_shape(cd3_input.shape(), x.shape(), "forward_g2");
    EncoderTrace<T> e1 = e1_.forward(x, train);
    EncoderTrace<T> e2 = e2_->forward(cd3_input, train);
    const EncoderTrace<T>* both[] = {&e1, &e2};
    return d2_->forward(both, train, mix_seed(dropout_seed, 2)).output;
}

template <class T>
void Generator<T>::init(std::uint64_t seed)
{
    Rng r1(mix_seed(seed, 11));
    e1_.init(r1);
    Rng r2(mix_seed(seed, 12));
    d1_.init(r2);
    if (e2_) {
        Rng r3(mix_seed(seed, 13));
        e2_->init(r3);
    }
    if (d2_) {
        Rng r4(mix_seed(seed, 14));
        d2_->init(r4);
    }
}

template <class T>
ParamRefs<T> Generator<T>::parameters()
{
    ParamRefs<T> out;
    for (auto& [name, refs] : subnetworks())
        out.insert(out.end(), refs.begin(), refs.end());
    return out;
}

template <class T>
BufferRefs<T> Generator<T>::buffers()
{
    BufferRefs<T> out;
    e1_.collect_buffers(out);
    d1_.collect_buffers(out);
    if (e2_)
        e2_->collect_buffers(out);
    if (d2_)
        d2_->collect_buffers(out);
    return out;
}

template <class T>
std::vector<std::pair<std::string, ParamRefs<T>>> Generator<T>::subnetworks()
{
    std::vector<std::pair<std::string, ParamRefs<T>>> out;
    out.emplace_back("e1", ParamRefs<T>{});
    e1_.collect(out.back().second);
    out.emplace_back("d1", ParamRefs<T>{});
    d1_.collect(out.back().second);
    if (e2_) {
        out.emplace_back("e2", ParamRefs<T>{});
        e2_->collect(out.back().second);
    }
    if (d2_) {
        out.emplace_back("d2", ParamRefs<T>{});
        d2_->collect(out.back().second);
    }
    return out;
}

template <class T>
std::size_t Generator<T>::parameter_count()
{
    std::size_t n = 0;
    for (auto* p : parameters())
        n += p->size();
    return n;
}

// ---------------------------------------------------------------------------
// Discriminator

template <class T>
Discriminator<T>::Discriminator(DiscriminatorSpec spec, std::string name) : spec_(std::move(spec))
{
    spec_.validate();
    const auto chain = discriminator_geometry(spec_);
    int in = spec_.in_channels();
    for (std::size_t i = 0; i < spec_.filters.size(); ++i) {
        const int f = spec_.filters[i];
        const std::string block = name + ".block" + std::to_string(i);
        convs_.emplace_back(block + ".conv", in, f, chain[i], i == 0);
        if (i == 0)
            norms_.emplace_back(std::nullopt);
        else
            norms_.emplace_back(BatchNorm2d<T>(block + ".norm", f));
        in = f;
    }
    convs_.emplace_back(name + ".score", in, 1, chain.back(), true);
    norms_.emplace_back(std::nullopt);
}

template <class T>
DiscriminatorTrace<T> Discriminator<T>::forward(const Tensor<T>& input, bool train)
{
    if (input.channels() != spec_.in_channels())
        throw ShapeMismatch("discriminator expects " + std::to_string(spec_.in_channels()) + " channels, got " +
                            input.shape().str());
    const std::size_t n = convs_.size();
    DiscriminatorTrace<T> tr;
    tr.inputs.resize(n);
    tr.pre_norm.resize(n);
    tr.norm.resize(n);
    tr.outputs.resize(n - 1);
    tr.inputs[0] = input;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        Tensor<T> y = convs_[i].forward(tr.inputs[i]);
        if (norms_[i]) {
            tr.pre_norm[i] = std::move(y);
            y = norms_[i]->forward(tr.pre_norm[i], train, tr.norm[i]);
        }
        kernels::leaky_relu_forward<T>(y, static_cast<T>(spec_.leaky_slope));
        tr.outputs[i] = y;
        tr.inputs[i + 1] = std::move(y);
    }
    tr.logits = convs_.back().forward(tr.inputs[n - 1]);
    return tr;
}

template <class T>
Tensor<T> Discriminator<T>::backward(const DiscriminatorTrace<T>& tr, const Tensor<T>& dlogits, bool need_dx,
                                     bool param_grads)
{
    const int n = static_cast<int>(convs_.size());
    Tensor<T> g = convs_.back().backward(tr.inputs[n - 1], dlogits, true, param_grads);
    for (int i = n - 2; i >= 0; --i) {
        kernels::leaky_relu_backward<T>(tr.outputs[i], static_cast<T>(spec_.leaky_slope), g);
        if (norms_[i])
            g = norms_[i]->backward(tr.pre_norm[i], tr.norm[i], g, param_grads);
        g = convs_[i].backward(tr.inputs[i], g, i > 0 || need_dx, param_grads);
    }
    return g;
}

template <class T>
void Discriminator<T>::init(std::uint64_t seed)
{
    Rng rng(seed);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].init(rng);
        if (norms_[i])
            norms_[i]->init(rng);
    }
}

template <class T>
ParamRefs<T> Discriminator<T>::parameters()
{
    ParamRefs<T> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(out);
        if (norms_[i])
            norms_[i]->collect(out);
    }
    return out;
}

template <class T>
BufferRefs<T> Discriminator<T>::buffers()
{
    BufferRefs<T> out;
    for (auto& n : norms_)
        if (n)
            n->collect_buffers(out);
    return out;
}

template <class T>
std::size_t Discriminator<T>::parameter_count()
{
    std::size_t n = 0;
    for (auto* p : parameters())
        n += p->size();
    return n;
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

// ---------------------------------------------------------------------------

std::string to_string(GeneratorTopology t)
{
    switch (t) {
    case GeneratorTopology::single_path: return "single_path";
    case GeneratorTopology::shared: return "shared";
    case GeneratorTopology::mutual: return "mutual";
    case GeneratorTopology::pair: return "pair";
    }
    return "?";
}

GeneratorTopology parse_topology(const std::string& s)
{
    if (s == "single_path") return GeneratorTopology::single_path;
    if (s == "shared") return GeneratorTopology::shared;
    if (s == "mutual") return GeneratorTopology::mutual;
    if (s == "pair") return GeneratorTopology::pair;
    throw SpecMismatch("unknown generator topology '" + s + "'");
}

std::string to_string(DiscriminatorMode m)
{
    return m == DiscriminatorMode::separate ? "separate" : "joint";
}

DiscriminatorMode parse_discriminator_mode(const std::string& s)
{
    if (s == "separate") return DiscriminatorMode::separate;
    if (s == "joint") return DiscriminatorMode::joint;
    throw SpecMismatch("unknown discriminator mode '" + s + "'");
}

}  // namespace hgan
