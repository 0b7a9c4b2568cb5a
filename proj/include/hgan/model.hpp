#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgan/layers.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

class SpecMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotMutual : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownVariant : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How the CD8 branch is wired.
enum class GeneratorTopology {
    single_path,  ///< one encoder, one decoder (one half of a pix2pix pair)
    shared,       ///< e1 feeds both d1 and d2
    mutual,       ///< d2 additionally sees e2(CD3 image) latent and skips
    pair,         ///< two independent encoder/decoder stacks (pix2pix pair)
};

struct GeneratorSpec {
    int depth = 8;
    std::vector<int> encoder_filters{64, 128, 256, 512, 512, 512, 512, 512};
    /// Output widths of the depth-1 upsampling blocks; the final stage maps to out_channels.
    std::vector<int> d1_filters{512, 512, 512, 512, 256, 128, 64};
    std::vector<int> d2_filters{1024, 1024, 1024, 1024, 512, 256, 128};
    int dropout_blocks = 4;
    double dropout_rate = 0.5;
    GeneratorTopology topology = GeneratorTopology::mutual;
    bool leaky_encoder = false;
    int in_channels = 1;
    int out_channels = 1;

    /// Default schedule truncated from the bottleneck side to the given depth.
    static GeneratorSpec with_depth(int depth, GeneratorTopology topology = GeneratorTopology::mutual);

    bool mutual() const { return topology == GeneratorTopology::mutual; }
    bool has_cd8() const { return topology != GeneratorTopology::single_path; }
    int input_side() const { return 1 << depth; }
    void validate() const;
};

enum class DiscriminatorMode { separate, joint };

struct DiscriminatorSpec {
    DiscriminatorMode mode = DiscriminatorMode::separate;
    std::vector<int> filters{64, 128, 256, 512};
    double leaky_slope = 0.2;

    /// Hoechst plus one stain, or Hoechst plus both stains.
    int in_channels() const { return mode == DiscriminatorMode::separate ? 2 : 3; }
    void validate() const;
};

/// Kernel/stride chain of the PatchGAN, last entry is the scoring conv.
std::vector<ConvGeometry> discriminator_geometry(const DiscriminatorSpec& spec);

/// Side of the input window seen by one output score.
int receptive_field(std::span<const ConvGeometry> chain);
int receptive_field(const DiscriminatorSpec& spec);

/// One trainable layer in a parameter breakdown.
struct LayerCount {
    std::string name;
    std::size_t weights = 0;
    std::size_t biases = 0;
    std::size_t norm = 0;  ///< batch-norm scale + shift
    std::size_t total() const { return weights + biases + norm; }
};

std::vector<LayerCount> layer_counts(const GeneratorSpec& spec);
std::vector<LayerCount> layer_counts(const DiscriminatorSpec& spec, const std::string& prefix);

enum class Variant { mcd, mc, md, m, d, pix2pix, regression_mc };

struct VariantConfig {
    Variant variant = Variant::mcd;
    GeneratorTopology topology = GeneratorTopology::mutual;
    bool compositing = true;
    DiscriminatorMode discriminator_mode = DiscriminatorMode::joint;
    bool regression = false;  ///< no discriminator, L1 only

    std::string name() const;
    int discriminator_count() const;
};

VariantConfig variant_config(Variant v);
/// Accepts "MCD", "HoechstGAN-MCD", "pix2pix", "Regression-MC" (case-insensitive).
Variant parse_variant(const std::string& name);
std::vector<Variant> all_variants();

struct ParameterBreakdown {
    std::vector<LayerCount> layers;
    std::size_t total = 0;
};

/// Trainable parameters of the generator(s) plus discriminator(s) of a variant.
ParameterBreakdown count_parameters(Variant v, int depth = 8);

template <class T>
struct EncoderTrace {
    Tensor<T> input;
    std::vector<Tensor<T>> pre_norm;  ///< conv outputs, needed by batch-norm backward
    std::vector<BatchNormCache<T>> norm;
    std::vector<Tensor<T>> features;  ///< post-activation block outputs; back() is the latent code
    const Tensor<T>& latent() const { return features.back(); }
};

template <class T>
class Encoder {
public:
    Encoder() = default;
    Encoder(const std::string& name, const GeneratorSpec& spec);

    EncoderTrace<T> forward(const Tensor<T>& x, bool train);
    /// dfeatures holds one gradient per feature map (empty entries mean zero).
    Tensor<T> backward(const EncoderTrace<T>& trace, std::vector<Tensor<T>>& dfeatures, bool need_dx);

    void init(Rng& rng);
    void collect(ParamRefs<T>& out);
    void collect_buffers(BufferRefs<T>& out);

private:
    std::vector<Conv2d<T>> convs_;
    std::vector<std::optional<BatchNorm2d<T>>> norms_;
    T slope_ = T(0);
};

template <class T>
struct DecoderTrace {
    std::vector<Tensor<T>> inputs;  ///< concatenated input of every stage
    std::vector<Tensor<T>> pre_norm;
    std::vector<BatchNormCache<T>> norm;
    std::vector<Tensor<T>> outputs;  ///< post-activation stage outputs
    Tensor<T> output;                ///< tanh image
    std::uint64_t dropout_seed = 0;
};

template <class T>
class Decoder {
public:
    Decoder() = default;
    /// sources: number of encoders whose latents and skips are concatenated.
    Decoder(const std::string& name, const GeneratorSpec& spec, std::span<const int> filters, int sources);

    DecoderTrace<T> forward(std::span<const EncoderTrace<T>* const> sources, bool train, std::uint64_t dropout_seed);
    /// Adds the gradient reaching each source encoder's feature maps into dsources.
    void backward(const DecoderTrace<T>& trace, const Tensor<T>& dy,
                  std::span<std::vector<Tensor<T>>* const> dsources);

    void init(Rng& rng);
    void collect(ParamRefs<T>& out);
    void collect_buffers(BufferRefs<T>& out);

private:
    std::vector<ConvTranspose2d<T>> deconvs_;
    std::vector<BatchNorm2d<T>> norms_;
    ConvTranspose2d<T> output_;
    std::vector<int> skip_widths_;
    int sources_ = 1;
    int dropout_blocks_ = 0;
    double dropout_rate_ = 0.0;
};

/// What encoder e2 encodes in a mutual generator.
template <class T>
struct CodeInput {
    enum class Kind { generated, composite, provided };
    Kind kind = Kind::generated;
    const Tensor<T>* image = nullptr;  ///< real CD3 (composite) or substitute (provided)
    double beta = 1.0;

    static CodeInput generated() { return {}; }
    static CodeInput composite(const Tensor<T>& real_cd3, double beta) { return {Kind::composite, &real_cd3, beta}; }
    static CodeInput provided(const Tensor<T>& image) { return {Kind::provided, &image, 1.0}; }
};

template <class T>
struct GeneratorPass {
    EncoderTrace<T> e1;
    EncoderTrace<T> e2;  ///< mutual: encodes the CD3 code input; pair: second Hoechst encoder
    DecoderTrace<T> d1;
    DecoderTrace<T> d2;
    Tensor<T> code_input;
    CodeInput<T> code{};

    const Tensor<T>& cd3() const { return d1.output; }
    const Tensor<T>& cd8() const { return d2.output; }
};

/// Encoders e1/e2 and decoders d1/d2 with U-Net skips; tensors are in the
/// signed [-1, 1] range. Dropout in the first decoder blocks is active in every
/// forward call; its masks derive from dropout_seed.
template <class T>
class Generator {
public:
    explicit Generator(GeneratorSpec spec);

    const GeneratorSpec& spec() const { return spec_; }

    GeneratorPass<T> forward(const Tensor<T>& x, const CodeInput<T>& code, bool train, std::uint64_t dropout_seed);
    /// d_cd3 / d_cd8 may be null. When backprop_through_cd3 is set, gradient
    /// reaching e2's input flows back into the CD3 branch.
    Tensor<T> backward(const GeneratorPass<T>& pass, const Tensor<T>* d_cd3, const Tensor<T>* d_cd8,
                       bool backprop_through_cd3 = true, bool need_dx = false);

    Tensor<T> forward_g1(const Tensor<T>& x, bool train, std::uint64_t dropout_seed);
    Tensor<T> forward_g2(const Tensor<T>& x, const Tensor<T>& cd3_input, bool train, std::uint64_t dropout_seed);

    void init(std::uint64_t seed);
    ParamRefs<T> parameters();
    BufferRefs<T> buffers();
    /// Parameters grouped by subnetwork name ("e1", "d1", "e2", "d2").
    std::vector<std::pair<std::string, ParamRefs<T>>> subnetworks();
    std::size_t parameter_count();

private:
    void check_input(const Tensor<T>& x) const;

    GeneratorSpec spec_;
    Encoder<T> e1_;
    std::optional<Encoder<T>> e2_;
    Decoder<T> d1_;
    std::optional<Decoder<T>> d2_;
};

template <class T>
struct DiscriminatorTrace {
    std::vector<Tensor<T>> inputs;
    std::vector<Tensor<T>> pre_norm;
    std::vector<BatchNormCache<T>> norm;
    std::vector<Tensor<T>> outputs;
    Tensor<T> logits;  ///< one score per receptive-field patch
};

/// PatchGAN classifier over the channel concatenation of Hoechst and stain(s).
template <class T>
class Discriminator {
public:
    explicit Discriminator(DiscriminatorSpec spec, std::string name = "D");

    const DiscriminatorSpec& spec() const { return spec_; }
    DiscriminatorTrace<T> forward(const Tensor<T>& input, bool train);
    /// Returns d(input). Parameter gradients accumulate only when param_grads.
    Tensor<T> backward(const DiscriminatorTrace<T>& trace, const Tensor<T>& dlogits, bool need_dx,
                       bool param_grads);

    void init(std::uint64_t seed);
    ParamRefs<T> parameters();
    BufferRefs<T> buffers();
    std::size_t parameter_count();

private:
    DiscriminatorSpec spec_;
    std::vector<Conv2d<T>> convs_;
    std::vector<std::optional<BatchNorm2d<T>>> norms_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

std::string to_string(GeneratorTopology t);
GeneratorTopology parse_topology(const std::string& s);
std::string to_string(DiscriminatorMode m);
DiscriminatorMode parse_discriminator_mode(const std::string& s);

}  // namespace hgan
