#include "hgan/dataset.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "hgan/config.hpp"

namespace hgan {

static_assert(std::endian::native == std::endian::little, "packed dataset files are little-endian");

std::vector<std::size_t> Dataset::indices(Split s) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s)
            out.push_back(i);
    return out;
}

Dataset from_synthetic(const SynthDataset& synth)
{
    Dataset d;
    d.samples.reserve(synth.samples.size());
    for (const auto& s : synth.samples) {
        Sample out;
        out.hoechst = s.triplet.hoechst.pixels;
        out.cd3 = s.triplet.cd3.pixels;
        out.cd8 = s.triplet.cd8.pixels;
        out.truth = s.triplet.truth;
        out.slide_id = s.triplet.hoechst.slide_id;
        out.grid_x = s.triplet.hoechst.grid_x;
        out.grid_y = s.triplet.hoechst.grid_y;
        out.split = s.split;
        d.samples.push_back(std::move(out));
    }
    d.provenance = Json{{"source", "synthetic"},
                        {"params", synth.params},
                        {"split", synth.split},
                        {"train_slides", synth.train_slides}};
    return d;
}

namespace {

class Fnv {
public:
    void bytes(const void* p, std::size_t n)
    {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= c[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void vec(const std::vector<T>& v)
    {
        const std::uint64_t n = v.size();
        bytes(&n, sizeof n);
        bytes(v.data(), v.size() * sizeof(T));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

template <class T>
void write_raw(std::ofstream& out, const std::vector<T>& v)
{
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
void read_raw(std::ifstream& in, std::vector<T>& v, const std::filesystem::path& file)
{
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    if (!in)
        throw std::runtime_error(file.string() + " is truncated");
}

}  // namespace

std::string fingerprint(const Dataset& data)
{
    Fnv h;
    for (const auto& s : data.samples) {
        h.vec(s.hoechst.data);
        h.vec(s.cd3.data);
        h.vec(s.cd8.data);
        h.vec(s.truth.nuclei().data);
        h.vec(s.truth.cd3_positive());
        h.vec(s.truth.cd8_positive());
        const int split = s.split == Split::train ? 0 : 1;
        h.bytes(&split, sizeof split);
        h.bytes(s.slide_id.data(), s.slide_id.size());
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.value()));
    return buf;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const int side = data.side();
    Json samples = Json::array();
    {
        std::ofstream px(dir / "pixels.f32", std::ios::binary);
        std::ofstream lb(dir / "labels.i32", std::ios::binary);
        if (!px || !lb)
            throw std::runtime_error("cannot write dataset files in " + dir.string());
        for (const auto& s : data.samples) {
            if (s.hoechst.width != side || s.hoechst.height != side)
                throw std::invalid_argument("all samples of a dataset must share one square size");
            write_raw(px, s.hoechst.data);
            write_raw(px, s.cd3.data);
            write_raw(px, s.cd8.data);
            write_raw(lb, s.truth.nuclei().data);
            samples.push_back(Json{{"slide_id", s.slide_id},
                                   {"grid_xy", {s.grid_x, s.grid_y}},
                                   {"split", to_string(s.split)},
                                   {"range_tag", to_string(RangeTag::unit)},
                                   {"nuclei", s.truth.count()},
                                   {"cd3_positive", s.truth.cd3_positive()},
                                   {"cd8_positive", s.truth.cd8_positive()}});
        }
    }
    const Json manifest{{"format", "hgan-dataset/1"},
                        {"patch_side", side},
                        {"count", data.samples.size()},
                        {"channels", {"hoechst", "cd3", "cd8"}},
                        {"fingerprint", fingerprint(data)},
                        {"provenance", data.provenance},
                        {"samples", samples}};
    write_json_atomic(dir / "manifest.json", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    const Json m = read_json(dir / "manifest.json");
    if (m.value("format", "") != "hgan-dataset/1")
        throw ConfigError(dir.string() + " is not a packed dataset");
    const int side = m.at("patch_side").get<int>();
    Dataset d;
    d.provenance = m.value("provenance", Json::object());
    std::ifstream px(dir / "pixels.f32", std::ios::binary);
    std::ifstream lb(dir / "labels.i32", std::ios::binary);
    if (!px || !lb)
        throw ConfigError("missing pixel or label file in " + dir.string());
    for (const auto& e : m.at("samples")) {
        Sample s;
        s.hoechst = Image(side, side);
        s.cd3 = Image(side, side);
        s.cd8 = Image(side, side);
        read_raw(px, s.hoechst.data, dir / "pixels.f32");
        read_raw(px, s.cd3.data, dir / "pixels.f32");
        read_raw(px, s.cd8.data, dir / "pixels.f32");
        LabelImage labels(side, side);
        read_raw(lb, labels.data, dir / "labels.i32");
        s.truth = MaskSet(std::move(labels), e.at("cd3_positive").get<std::vector<int>>(),
                          e.at("cd8_positive").get<std::vector<int>>());
        s.slide_id = e.at("slide_id").get<std::string>();
        s.grid_x = e.at("grid_xy").at(0).get<int>();
        s.grid_y = e.at("grid_xy").at(1).get<int>();
        s.split = parse_split(e.at("split").get<std::string>());
        d.samples.push_back(std::move(s));
    }
    if (auto fp = m.find("fingerprint"); fp != m.end() && fp->get<std::string>() != fingerprint(d))
        throw ConfigError("dataset in " + dir.string() + " does not match its recorded fingerprint");
    return d;
}

}  // namespace hgan
