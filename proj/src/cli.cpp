#include "hgan/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "hgan/config.hpp"
#include "hgan/dataset.hpp"
#include "hgan/eval.hpp"
#include "hgan/io.hpp"
#include "hgan/masks.hpp"
#include "hgan/preprocess.hpp"
#include "hgan/rng.hpp"
#include "hgan/synthdata.hpp"
#include "hgan/train.hpp"

#ifndef HGAN_SOURCE_REVISION
#define HGAN_SOURCE_REVISION "unknown"
#endif

namespace fs = std::filesystem;

namespace hgan::cli {

namespace {

/// Raised for unusable arguments or inputs (exit code 2).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_now()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

nlohmann::json to_json(const RunManifest& m)
{
    return Json{{"command", m.command},
                {"arguments", m.arguments},
                {"config", m.config},
                {"seeds", m.seeds},
                {"dataset_fingerprint", m.dataset_fingerprint},
                {"source_revision", m.source_revision},
                {"started_at", m.started_at},
                {"finished_at", m.finished_at},
                {"status", m.status},
                {"artifacts", m.artifacts}};
}

std::map<std::string, std::uint64_t> seed_streams(std::uint64_t root)
{
    std::map<std::string, std::uint64_t> s{{"root", root}};
    for (const char* name : {"data", "init", "dropout", "eval-dropout", "ablation", "split"})
        s[name] = derive_seed(root, name);
    return s;
}

std::string source_revision() { return HGAN_SOURCE_REVISION; }

Variant variant_from_flags(bool mutual, bool compositing, bool joint_discriminator, bool regression)
{
    for (Variant v : all_variants()) {
        const auto c = variant_config(v);
        const bool is_mutual = c.topology == GeneratorTopology::mutual;
        const bool joint = c.discriminator_mode == DiscriminatorMode::joint && !c.regression;
        if (is_mutual == mutual && c.compositing == compositing && joint == joint_discriminator &&
            c.regression == regression)
            return v;
    }
    throw UnknownVariant(std::string("no published configuration has") + (mutual ? " --mutual" : "") +
                         (compositing ? " --compositing" : "") + (joint_discriminator ? " --joint-discriminator" : "") +
                         (regression ? " --regression" : "") + (mutual || compositing || joint_discriminator || regression ? "" : " no flags"));
}

namespace {

/// State shared by all subcommands of one invocation.
struct Context {
    std::ostream& out;
    std::ostream& err;
    const char* const* env = nullptr;
    std::vector<std::string> args;
    std::string workspace = ".";

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : fs::path(workspace) / p; }
};

/// Writes the run manifest at start ("running") and at the end ("complete").
class ManifestWriter {
public:
    ManifestWriter(const Context& ctx, std::string command, fs::path path) : path_(std::move(path))
    {
        m_.command = std::move(command);
        m_.arguments = ctx.args;
        m_.source_revision = source_revision();
        m_.started_at = utc_now();
    }
    RunManifest& manifest() { return m_; }
    void begin() { write_json_atomic(path_, to_json(m_)); }
    void complete()
    {
        m_.finished_at = utc_now();
        m_.status = "complete";
        write_json_atomic(path_, to_json(m_));
    }

private:
    RunManifest m_;
    fs::path path_;
};

fs::path beside(const fs::path& file, const std::string& suffix)
{
    fs::path p = file;
    p += suffix;
    return p;
}

void require_file(const fs::path& p, const std::string& what)
{
    if (!fs::exists(p))
        throw UsageError(what + " not found: " + p.string());
}

void require_image_extension(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* ok : {".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp"})
        if (ext == ok)
            return;
    throw UsageError("output image " + p.string() + " needs a .png, .tif, .jpg or .bmp extension");
}

Json load_config_file(const Context& ctx, const std::string& path)
{
    if (path.empty())
        return Json::object();
    const fs::path p = ctx.resolve(path);
    require_file(p, "config file");
    Json j = read_json(p);
    if (!j.is_object())
        throw ConfigError(p.string() + ": top level must be an object");
    return j;
}

/// Defaults < config file < HGAN_* environment < --set overrides. The result
/// only holds keys that differ from the defaults' provenance (file, env, set),
/// so callers can tell which settings were given explicitly.
Json layered(const Json& defaults, const Json& file_section, const std::vector<std::string>& sets,
             const char* const* env)
{
    Json merged = file_section.is_object() ? file_section : Json::object();
    std::vector<std::string> placeholders;
    for (auto& [k, v] : defaults.items())
        if (!merged.contains(k)) {
            merged[k] = nullptr;
            placeholders.push_back(k);
        }
    apply_env_overrides(merged, env);
    for (const auto& k : placeholders)
        if (merged.at(k).is_null())
            merged.erase(k);
    for (const auto& s : sets)
        apply_override(merged, s);
    return merged;
}

std::unique_ptr<Trainer> trainer_from_checkpoint(const fs::path& ckpt)
{
    require_file(ckpt, "checkpoint");
    auto t = std::make_unique<Trainer>(checkpoint_config(ckpt));
    t->load_checkpoint(ckpt);
    return t;
}

void require_matching_geometry(const TrainConfig& cfg, const Dataset& data)
{
    const int expected = 1 << cfg.depth;
    if (data.side() != expected)
        throw UsageError("depth " + std::to_string(cfg.depth) + " expects " + std::to_string(expected) +
                         "-pixel patches but the dataset holds " + std::to_string(data.side()) +
                         "-pixel patches (set depth=log2(side))");
}

InferenceOptions inference_options(const Trainer& t, std::size_t batch)
{
    InferenceOptions o;
    o.batch_size = batch;
    o.dropout_root = derive_seed(t.config().seed, "eval-dropout");
    o.ablation_seed = derive_seed(t.config().seed, "ablation");
    return o;
}

// ---------------------------------------------------------------------------

struct FitNormArgs {
    std::string slide;
    std::string out;
    std::string plot;
    double floor = 0.0;
    int bins = 64;
};

int cmd_fit_norm(Context& ctx, const FitNormArgs& a)
{
    const fs::path slide_path = ctx.resolve(a.slide);
    const fs::path out = ctx.resolve(a.out);
    const fs::path plot = a.plot.empty() ? fs::path(out).replace_extension(".png") : ctx.resolve(a.plot);
    require_image_extension(plot);
    const Image slide = read_image(slide_path);
    ManifestWriter mw(ctx, "fit-norm", beside(out, ".run.json"));
    mw.manifest().config = Json{{"slide", slide_path.string()}, {"floor", a.floor}, {"bins", a.bins}};
    mw.begin();

    const IntensityModel model = fit_intensity_model(slide, a.floor);
    write_json_atomic(out, model);
    std::vector<double> samples;
    for (float v : slide.data)
        if (v > a.floor)
            samples.push_back(v);
    plot_intensity_histogram(samples, model, plot, a.bins);

    mw.manifest().artifacts = {{"model", out.string()}, {"histogram", plot.string()}};
    mw.complete();
    ctx.out << "mu " << model.mu << "  sigma " << model.sigma << "  (" << model.sample_count << " pixels)\n"
            << "wrote " << out.string() << " and " << plot.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(Context& ctx, const SynthArgs& a)
{
    const Json file = load_config_file(ctx, a.config);
    SynthParams params;
    SplitSpec split;
    const Json synth_j = layered(Json(params), file.value("synth", Json::object()), {}, nullptr);
    const Json split_j = layered(Json(split), file.value("split", Json::object()), {}, nullptr);
    Json all{{"synth", synth_j}, {"split", split_j}};
    for (const auto& s : a.sets)
        apply_override(all, s);
    params = all.at("synth").get<SynthParams>();
    split = all.at("split").get<SplitSpec>();
    if (a.seed)
        params.seed = *a.seed;
    params.validate();

    const fs::path out = ctx.resolve(a.out);
    ManifestWriter mw(ctx, "synth", out / "run_manifest.json");
    mw.manifest().config = Json{{"synth", params}, {"split", split}};
    mw.manifest().seeds = seed_streams(params.seed);
    mw.begin();

    const Dataset data = from_synthetic(generate_dataset(params, split));
    save_dataset(data, out);
    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.manifest().artifacts = {{"dataset", out.string()}};
    mw.complete();
    ctx.out << "wrote " << data.samples.size() << " patches (" << data.indices(Split::train).size() << " train, "
            << data.indices(Split::test).size() << " test) to " << out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string hoechst, cd3, cd8, nuclei, out, slide_id;
    std::string split = "train";
    int patch_side = 256;
    double fit_floor = 0.0;
    double empty_floor = 0.05;
    double empty_fraction = 0.01;
    double cd3_threshold = 0.3;
    double cd8_threshold = 0.3;
    double blob_floor = 0.2;
    int min_area = 10;
    bool append = false;
};

int cmd_extract(Context& ctx, const ExtractArgs& a)
{
    const fs::path paths[] = {ctx.resolve(a.hoechst), ctx.resolve(a.cd3), ctx.resolve(a.cd8)};
    Image slides[3];
    IntensityModel models[3];
    for (int i = 0; i < 3; ++i)
        slides[i] = read_image(paths[i]);
    for (int i = 1; i < 3; ++i)
        if (slides[i].width != slides[0].width || slides[i].height != slides[0].height)
            throw UsageError("stain slides must share the Hoechst slide's dimensions");
    std::optional<LabelImage> nuclei;
    if (!a.nuclei.empty()) {
        nuclei = read_label_image(ctx.resolve(a.nuclei));
        if (nuclei->width != slides[0].width || nuclei->height != slides[0].height)
            throw UsageError("nucleus label image must share the Hoechst slide's dimensions");
    }
    const Split split = parse_split(a.split);
    const std::string slide_id = a.slide_id.empty() ? paths[0].stem().string() : a.slide_id;
    const fs::path out = ctx.resolve(a.out);

    ManifestWriter mw(ctx, "extract", out / "run_manifest.json");
    mw.manifest().config = Json{{"patch_side", a.patch_side},
                                {"fit_floor", a.fit_floor},
                                {"emptiness", EmptinessCriterion{a.empty_floor, a.empty_fraction}},
                                {"cd3_threshold", a.cd3_threshold},
                                {"cd8_threshold", a.cd8_threshold},
                                {"blob_floor", a.blob_floor},
                                {"min_area", a.min_area},
                                {"split", a.split},
                                {"slide_id", slide_id}};
    mw.begin();

    for (int i = 0; i < 3; ++i)
        models[i] = fit_intensity_model(slides[i], a.fit_floor);
    const auto hoechst = extract_patches(slides[0], a.patch_side, models[0],
                                         EmptinessCriterion{a.empty_floor, a.empty_fraction}, slide_id);
    const EmptinessCriterion keep_all{0.0, 0.0};
    const auto cd3 = extract_patches(slides[1], a.patch_side, models[1], keep_all, slide_id);
    const auto cd8 = extract_patches(slides[2], a.patch_side, models[2], keep_all, slide_id);
    const int nx = slides[0].width / a.patch_side;

    Dataset data;
    const bool appending = a.append && fs::exists(out / "manifest.json");
    if (appending)
        data = load_dataset(out);
    if (appending && data.side() != 0 && data.side() != a.patch_side)
        throw UsageError("cannot append " + std::to_string(a.patch_side) + "-pixel patches to a dataset of side " +
                         std::to_string(data.side()));
    for (const auto& h : hoechst) {
        const std::size_t k = static_cast<std::size_t>(h.grid_y) * static_cast<std::size_t>(nx) +
                              static_cast<std::size_t>(h.grid_x);
        Sample s;
        s.hoechst = h.pixels;
        s.cd3 = cd3[k].pixels;
        s.cd8 = cd8[k].pixels;
        MaskSet masks;
        if (nuclei) {
            LabelImage crop(a.patch_side, a.patch_side);
            for (int y = 0; y < a.patch_side; ++y)
                for (int x = 0; x < a.patch_side; ++x)
                    crop.at(x, y) = nuclei->at(h.grid_x * a.patch_side + x, h.grid_y * a.patch_side + y);
            masks = ingest_nucleus_mask(crop);
        } else {
            masks = label_blobs(s.hoechst, a.blob_floor, a.min_area);
        }
        masks = classify_positive(masks, s.cd3, a.cd3_threshold, Marker::cd3);
        s.truth = classify_positive(masks, s.cd8, a.cd8_threshold, Marker::cd8);
        s.slide_id = slide_id;
        s.grid_x = h.grid_x;
        s.grid_y = h.grid_y;
        s.split = split;
        data.samples.push_back(std::move(s));
    }
    if (data.samples.empty())
        throw EmptyDataset("no non-empty patches in " + paths[0].string());
    Json slide_entry{{"slide_id", slide_id},
                     {"split", a.split},
                     {"paths", {paths[0].string(), paths[1].string(), paths[2].string()}},
                     {"models", {models[0], models[1], models[2]}},
                     {"patches", hoechst.size()}};
    if (!data.provenance.contains("slides"))
        data.provenance = Json{{"source", "slides"}, {"slides", Json::array()}};
    data.provenance["slides"].push_back(slide_entry);
    save_dataset(data, out);

    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.manifest().artifacts = {{"dataset", out.string()}};
    mw.complete();
    ctx.out << "extracted " << hoechst.size() << " of " << cd3.size() << " patches from " << slide_id << " into "
            << out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
    std::string data;
    std::string out;
};

int cmd_stats(Context& ctx, const StatsArgs& a)
{
    const fs::path dir = ctx.resolve(a.data);
    const Dataset data = load_dataset(dir);
    std::vector<MaskSet> masks;
    for (const auto& s : data.samples)
        masks.push_back(s.truth);
    const DatasetStats st = compute_dataset_stats(masks);
    const std::pair<const char*, const StainStats*> rows[] = {
        {"Hoechst", &st.hoechst}, {"CD3", &st.cd3}, {"CD8", &st.cd8}};
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %12s %12s %12s %12s\n", "stain", "cells", "per patch", "presence %",
                  "coverage %");
    ctx.out << st.patches << " patches\n" << line;
    Json j{{"patches", st.patches}, {"fingerprint", fingerprint(data)}};
    for (const auto& [name, s] : rows) {
        std::snprintf(line, sizeof line, "%-8s %12llu %12.3f %12.2f %12.3f\n", name,
                      static_cast<unsigned long long>(s->total_cells), s->cells_per_patch, s->presence_percent,
                      s->area_coverage_percent);
        ctx.out << line;
        j[name] = Json{{"total_cells", s->total_cells},
                       {"cells_per_patch", s->cells_per_patch},
                       {"presence_percent", s->presence_percent},
                       {"area_coverage_percent", s->area_coverage_percent}};
    }
    if (!a.out.empty()) {
        const fs::path out = ctx.resolve(a.out);
        ManifestWriter mw(ctx, "stats", beside(out, ".run.json"));
        mw.manifest().dataset_fingerprint = fingerprint(data);
        mw.manifest().config = Json{{"data", dir.string()}};
        mw.begin();
        write_json_atomic(out, j);
        mw.manifest().artifacts = {{"stats", out.string()}};
        mw.complete();
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::vector<std::string> sets;
    std::string variant;
    bool mutual = false;
    bool compositing = false;
    bool joint_discriminator = false;
    bool regression = false;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::string resume;
};

TrainConfig resolve_train_config(const Context& ctx, const TrainArgs& a)
{
    const Json file = load_config_file(ctx, a.config);
    Json merged = layered(Json(TrainConfig{}), file.value("train", file), a.sets, ctx.env);
    const bool any_flag = a.mutual || a.compositing || a.joint_discriminator || a.regression;
    std::optional<Variant> v;
    if (!a.variant.empty())
        v = parse_variant(a.variant);
    if (any_flag) {
        const Variant from_flags = variant_from_flags(a.mutual, a.compositing, a.joint_discriminator, a.regression);
        if (v && *v != from_flags)
            throw UsageError("--variant " + a.variant + " contradicts the variant flags (" +
                             variant_config(from_flags).name() + ")");
        v = from_flags;
    }
    if (v) {
        merged["variant"] = variant_config(*v).name();
        for (const char* k : {"topology", "compositing", "discriminator_mode", "regression"})
            merged.erase(k);
    }
    if (a.epochs)
        merged["total_epochs"] = *a.epochs;
    if (a.seed)
        merged["seed"] = *a.seed;
    TrainConfig c = merged.get<TrainConfig>();
    if (!merged.contains("schedule") && !merged.contains("decay_start_epoch") && c.total_epochs > 0 &&
        c.total_epochs != 30)
        c.scale_schedules_to_epochs();
    c.validate();
    return c;
}

int cmd_train(Context& ctx, const TrainArgs& a)
{
    const fs::path data_dir = ctx.resolve(a.data);
    const fs::path out = ctx.resolve(a.out);
    std::unique_ptr<Trainer> trainer;
    if (!a.resume.empty()) {
        trainer = trainer_from_checkpoint(ctx.resolve(a.resume));
    } else {
        trainer = std::make_unique<Trainer>(resolve_train_config(ctx, a));
    }
    const TrainConfig& cfg = trainer->config();
    const Dataset data = load_dataset(data_dir);
    require_matching_geometry(cfg, data);

    ManifestWriter mw(ctx, "train", out / "run_manifest.json");
    mw.manifest().config = cfg;
    mw.manifest().seeds = seed_streams(cfg.seed);
    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.manifest().artifacts = {{"checkpoints", (out / "checkpoints").string()},
                               {"metrics", (out / "metrics.jsonl").string()},
                               {"config", (out / "config.json").string()}};
    if (!a.resume.empty())
        mw.manifest().artifacts["resumed_from"] = ctx.resolve(a.resume).string();
    mw.begin();
    write_json_atomic(out / "config.json", Json(cfg));

    ctx.out << "training " << variant_config(cfg.variant).name() << " (depth " << cfg.depth << ", "
            << cfg.total_epochs << " epochs, batch " << cfg.batch_size << ") on "
            << data.indices(Split::train).size() << " patches\n";
    LoopOptions opts;
    opts.checkpoint_dir = out / "checkpoints";
    opts.metrics_path = out / "metrics.jsonl";
    opts.on_epoch = [&](const EpochSummary& s, Trainer&) {
        char line[200];
        std::snprintf(line, sizeof line,
                      "epoch %3d/%d  D %.4f  G %.4f  L1 cd3 %.4f cd8 %.4f  beta %.3f  lr %.2e\n", s.epoch,
                      cfg.total_epochs, s.discriminator_loss, s.generator_loss, s.l1_cd3, s.l1_cd8, s.beta_end,
                      s.lr_end);
        ctx.out << line << std::flush;
    };
    const TrainResult r = train_loop(*trainer, data, opts);
    if (!r.checkpoints.empty())
        mw.manifest().artifacts["final_checkpoint"] = r.checkpoints.back().string();
    mw.complete();
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string split = "test";
    std::size_t batch = 16;
};

int cmd_eval(Context& ctx, const EvalArgs& a)
{
    auto trainer = trainer_from_checkpoint(ctx.resolve(a.checkpoint));
    const Dataset data = load_dataset(ctx.resolve(a.data));
    require_matching_geometry(trainer->config(), data);
    const Split split = parse_split(a.split);
    const fs::path out = ctx.resolve(a.out);
    ManifestWriter mw(ctx, "eval", out / "run_manifest.json");
    mw.manifest().config = Json{{"checkpoint", ctx.resolve(a.checkpoint).string()},
                                {"split", a.split},
                                {"batch_size", a.batch},
                                {"train", trainer->config()}};
    mw.manifest().seeds = seed_streams(trainer->config().seed);
    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.begin();

    const MirReport report = evaluate(trainer->generator(), data, split, inference_options(*trainer, a.batch));
    write_report(report, out, "eval");
    const std::string table = format_table(report.aggregates);
    {
        std::ofstream(out / "eval.table.txt") << table;
    }
    ctx.out << table;
    mw.manifest().artifacts = {{"records", (out / "eval.records.jsonl").string()},
                               {"summary", (out / "eval.summary.json").string()},
                               {"table", (out / "eval.table.txt").string()}};
    mw.complete();
    return kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string mode = "all";
    std::string split = "test";
    std::size_t batch = 16;
    std::optional<std::uint64_t> seed;
};

int cmd_ablate(Context& ctx, const AblateArgs& a)
{
    std::vector<CodeMode> modes = a.mode == "all" ? all_code_modes() : std::vector<CodeMode>{parse_code_mode(a.mode)};
    auto trainer = trainer_from_checkpoint(ctx.resolve(a.checkpoint));
    if (!trainer->generator().spec().mutual())
        throw NotMutual("checkpoint " + a.checkpoint + " holds a " + variant_config(trainer->config().variant).name() +
                        " generator without encoder e2");
    const Dataset data = load_dataset(ctx.resolve(a.data));
    require_matching_geometry(trainer->config(), data);
    const Split split = parse_split(a.split);
    const fs::path out = ctx.resolve(a.out);
    auto opts = inference_options(*trainer, a.batch);
    if (a.seed)
        opts.ablation_seed = derive_seed(*a.seed, "ablation");

    ManifestWriter mw(ctx, "ablate", out / "run_manifest.json");
    mw.manifest().config = Json{{"checkpoint", ctx.resolve(a.checkpoint).string()},
                                {"modes", a.mode},
                                {"split", a.split},
                                {"batch_size", a.batch},
                                {"ablation_seed", opts.ablation_seed},
                                {"train", trainer->config()}};
    mw.manifest().seeds = seed_streams(trainer->config().seed);
    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.begin();

    Json table = Json::array();
    std::ostringstream text;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %20s %20s %7s %9s\n", "e2 input", "CD8 MIR_rel mean±std",
                  "CD3 MIR_rel mean±std", "count", "excluded");
    text << line;
    for (CodeMode m : modes) {
        const MirReport r = ablate_encoder_input(trainer->generator(), data, split, m, opts);
        write_report(r, out, "ablate." + to_string(m));
        const auto& c8 = r.find(Marker::cd8, split);
        const auto& c3 = r.find(Marker::cd3, split);
        char cell8[48], cell3[48];
        std::snprintf(cell8, sizeof cell8, "%.3f ± %.3f", c8.mean, c8.std);
        std::snprintf(cell3, sizeof cell3, "%.3f ± %.3f", c3.mean, c3.std);
        std::snprintf(line, sizeof line, "%-16s %20s %20s %7zu %9zu\n", to_string(m).c_str(), cell8, cell3, c8.count,
                      c8.excluded_count);
        text << line;
        table.push_back(Json{{"mode", to_string(m)}, {"cd8", to_json(c8)}, {"cd3", to_json(c3)}});
        mw.manifest().artifacts["records." + to_string(m)] = (out / ("ablate." + to_string(m) + ".records.jsonl")).string();
    }
    write_json_atomic(out / "ablation.json", Json{{"split", a.split}, {"modes", table}});
    {
        std::ofstream(out / "ablation.txt") << text.str();
    }
    ctx.out << text.str();
    mw.manifest().artifacts["table"] = (out / "ablation.json").string();
    mw.complete();
    return kOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string split = "test";
    int count = 5;
    int tile = 128;
    std::optional<std::uint64_t> seed;
};

int cmd_render(Context& ctx, const RenderArgs& a)
{
    auto trainer = trainer_from_checkpoint(ctx.resolve(a.checkpoint));
    const Dataset data = load_dataset(ctx.resolve(a.data));
    require_matching_geometry(trainer->config(), data);
    const Split split = parse_split(a.split);
    const fs::path out = ctx.resolve(a.out);
    require_image_extension(out);
    if (a.count <= 0 || a.tile < 16)
        throw UsageError("--count must be positive and --tile at least 16");
    auto pool = data.indices(split);
    if (pool.empty())
        throw EmptyDataset("the " + a.split + " split is empty");
    const std::uint64_t seed = derive_seed(a.seed.value_or(trainer->config().seed), "render");
    Rng rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(pool.size(), static_cast<std::size_t>(std::max(a.count, 0))));
    std::sort(pool.begin(), pool.end());

    ManifestWriter mw(ctx, "render", beside(out, ".run.json"));
    mw.manifest().config = Json{{"checkpoint", ctx.resolve(a.checkpoint).string()},
                                {"split", a.split},
                                {"count", a.count},
                                {"tile", a.tile},
                                {"selection_seed", seed},
                                {"samples", pool}};
    mw.manifest().dataset_fingerprint = fingerprint(data);
    mw.begin();

    const auto gen = generate_stains(trainer->generator(), data, pool, inference_options(*trainer, 16));
    std::vector<GridRow> rows;
    for (std::size_t i = 0; i < pool.size(); ++i)
        rows.push_back({&data.samples[pool[i]], &gen[i]});
    const GridFigure fig = render_grid(rows, out, a.tile);
    for (std::size_t i = 0; i < fig.annotations.size(); ++i) {
        std::string ann = fig.annotations[i];
        std::replace(ann.begin(), ann.end(), '\n', ';');
        ctx.out << "sample " << pool[i] << ": " << ann << '\n';
    }
    mw.manifest().artifacts = {{"grid", out.string()}};
    mw.complete();
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const char* const* env)
{
    Context ctx{out, err, env, args};
    CLI::App app{"Virtual staining of CD3/CD8 from Hoechst patches with mutually coupled conditional GANs", "hgan"};
    app.require_subcommand(1);
    app.add_option("-w,--workspace", ctx.workspace, "Root that relative paths are resolved against")
        ->capture_default_str();

    int code = kOk;
    auto guarded = [&](auto&& fn) { return [&, fn] { code = fn(); }; };

    FitNormArgs fit;
    auto* s_fit = app.add_subcommand("fit-norm", "Fit the Gaussian intensity model of one slide");
    s_fit->add_option("--slide", fit.slide, "Single-channel slide image")->required();
    s_fit->add_option("--out", fit.out, "Output model JSON")->required();
    s_fit->add_option("--plot", fit.plot, "Histogram figure (default: <out>.png)");
    s_fit->add_option("--floor", fit.floor, "Fit only pixels above this raw intensity")->capture_default_str();
    s_fit->add_option("--bins", fit.bins, "Histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
    s_fit->callback(guarded([&] { return cmd_fit_norm(ctx, fit); }));

    SynthArgs syn;
    auto* s_syn = app.add_subcommand("synth", "Generate a seeded synthetic triplet dataset");
    s_syn->add_option("--out", syn.out, "Output dataset directory")->required();
    s_syn->add_option("--config", syn.config, "JSON with optional \"synth\" and \"split\" sections");
    s_syn->add_option("--set", syn.sets, "Override, e.g. synth.patch_side=64 or split.n_patches=500");
    s_syn->add_option("--seed", syn.seed, "Root seed");
    s_syn->callback(guarded([&] { return cmd_synth(ctx, syn); }));

    ExtractArgs ex;
    auto* s_ex = app.add_subcommand("extract", "Cut aligned Hoechst/CD3/CD8 slides into a patch dataset");
    s_ex->add_option("--hoechst", ex.hoechst, "Hoechst slide")->required();
    s_ex->add_option("--cd3", ex.cd3, "CD3 slide")->required();
    s_ex->add_option("--cd8", ex.cd8, "CD8 slide")->required();
    s_ex->add_option("--nuclei", ex.nuclei, "Nucleus label image (default: threshold the Hoechst patch)");
    s_ex->add_option("--out", ex.out, "Dataset directory")->required();
    s_ex->add_option("--slide-id", ex.slide_id, "Slide identifier (default: Hoechst file stem)");
    s_ex->add_option("--split", ex.split, "train or test")->capture_default_str();
    s_ex->add_option("--patch-side", ex.patch_side, "Patch side in pixels")->capture_default_str();
    s_ex->add_option("--fit-floor", ex.fit_floor, "Intensity-model fit floor")->capture_default_str();
    s_ex->add_option("--empty-floor", ex.empty_floor, "Normalized brightness of a foreground pixel")
        ->capture_default_str();
    s_ex->add_option("--empty-fraction", ex.empty_fraction, "Minimum foreground fraction of a kept patch")
        ->capture_default_str();
    s_ex->add_option("--cd3-threshold", ex.cd3_threshold, "Mean CD3 intensity of a positive nucleus")
        ->capture_default_str();
    s_ex->add_option("--cd8-threshold", ex.cd8_threshold, "Mean CD8 intensity of a positive nucleus")
        ->capture_default_str();
    s_ex->add_option("--blob-floor", ex.blob_floor, "Hoechst threshold for nucleus blobs")->capture_default_str();
    s_ex->add_option("--min-area", ex.min_area, "Smallest kept nucleus blob")->capture_default_str();
    s_ex->add_flag("--append", ex.append, "Add to an existing dataset directory");
    s_ex->callback(guarded([&] { return cmd_extract(ctx, ex); }));

    StatsArgs st;
    auto* s_st = app.add_subcommand("stats", "Cell statistics of a dataset");
    s_st->add_option("--data", st.data, "Dataset directory")->required();
    s_st->add_option("--out", st.out, "Optional JSON output");
    s_st->callback(guarded([&] { return cmd_stats(ctx, st); }));

    TrainArgs tr;
    auto* s_tr = app.add_subcommand("train", "Train a generator variant");
    s_tr->add_option("--data", tr.data, "Dataset directory")->required();
    s_tr->add_option("--out", tr.out, "Run directory")->required();
    s_tr->add_option("--config", tr.config, "JSON config (top level or a \"train\" section)");
    s_tr->add_option("--set", tr.sets, "Override, e.g. batch_size=16 or schedule.mid_epoch=5");
    s_tr->add_option("--variant", tr.variant, "MCD, MC, MD, M, D, pix2pix or Regression-MC");
    s_tr->add_flag("--mutual", tr.mutual, "M: mutual generator");
    s_tr->add_flag("--compositing", tr.compositing, "C: composite real/fake CD3 into e2");
    s_tr->add_flag("--joint-discriminator", tr.joint_discriminator, "D: one discriminator over both stains");
    s_tr->add_flag("--regression", tr.regression, "L1 only, no discriminator");
    s_tr->add_option("--epochs", tr.epochs, "Total epochs (schedules scale along)");
    s_tr->add_option("--seed", tr.seed, "Root seed");
    s_tr->add_option("--resume", tr.resume, "Continue from a checkpoint (its config wins)");
    s_tr->callback(guarded([&] { return cmd_train(ctx, tr); }));

    EvalArgs ev;
    auto* s_ev = app.add_subcommand("eval", "MIR and relative MIR of a checkpoint");
    s_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    s_ev->add_option("--data", ev.data, "Dataset directory")->required();
    s_ev->add_option("--out", ev.out, "Report directory")->required();
    s_ev->add_option("--split", ev.split, "train or test")->capture_default_str();
    s_ev->add_option("--batch-size", ev.batch, "Inference batch")->capture_default_str()->check(CLI::PositiveNumber);
    s_ev->callback(guarded([&] { return cmd_eval(ctx, ev); }));

    AblateArgs ab;
    auto* s_ab = app.add_subcommand("ablate", "Replace encoder e2's input and compare CD8 MIR_rel");
    s_ab->add_option("--checkpoint", ab.checkpoint, "Checkpoint of a mutual variant")->required();
    s_ab->add_option("--data", ab.data, "Dataset directory")->required();
    s_ab->add_option("--out", ab.out, "Report directory")->required();
    s_ab->add_option("--mode", ab.mode, "all, generated, matched_real, shuffled_real or gaussian_noise")
        ->capture_default_str();
    s_ab->add_option("--split", ab.split, "train or test")->capture_default_str();
    s_ab->add_option("--batch-size", ab.batch, "Inference batch")->capture_default_str()->check(CLI::PositiveNumber);
    s_ab->add_option("--seed", ab.seed, "Seed of the shuffled and noise inputs (default: from the checkpoint)");
    s_ab->callback(guarded([&] { return cmd_ablate(ctx, ab); }));

    RenderArgs rd;
    auto* s_rd = app.add_subcommand("render", "Result grid of randomly selected samples");
    s_rd->add_option("--checkpoint", rd.checkpoint, "Checkpoint file")->required();
    s_rd->add_option("--data", rd.data, "Dataset directory")->required();
    s_rd->add_option("--out", rd.out, "Output image (.png)")->required();
    s_rd->add_option("--split", rd.split, "train or test")->capture_default_str();
    s_rd->add_option("--count", rd.count, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
    s_rd->add_option("--tile", rd.tile, "Tile side in pixels")->capture_default_str();
    s_rd->add_option("--seed", rd.seed, "Selection seed (default: from the checkpoint)");
    s_rd->callback(guarded([&] { return cmd_render(ctx, rd); }));

    std::vector<std::string> argv_store{"hgan"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_store)
        argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        return code;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kOk : kUsageError;
    } catch (const DegenerateSamples& e) {
        err << "error: degenerate samples: " << e.what() << '\n';
        return kDegenerateData;
    } catch (const EmptyDataset& e) {
        err << "error: empty dataset: " << e.what() << '\n';
        return kDegenerateData;
    } catch (const SlideTooSmall& e) {
        err << "error: slide too small: " << e.what() << '\n';
        return kDegenerateData;
    } catch (const AllExcluded& e) {
        err << "error: nothing to score: " << e.what() << '\n';
        return kDegenerateData;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ImageReadError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "error: config: " << e.what() << '\n';
        return kUsageError;
    } catch (const UnknownVariant& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ResumeMismatch& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const NotMutual& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: config: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
}

}  // namespace hgan::cli
