#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "faceforge/binio.hpp"
#include "faceforge/embeddings.hpp"
#include "faceforge/error.hpp"
#include "faceforge/evaluate.hpp"
#include "faceforge/kernels.hpp"
#include "faceforge/loss.hpp"
#include "faceforge/manifest.hpp"
#include "faceforge/mapping_network.hpp"
#include "faceforge/mesh_io.hpp"
#include "faceforge/model.hpp"
#include "faceforge/render.hpp"
#include "faceforge/rng.hpp"
#include "faceforge/shape_store.hpp"
#include "faceforge/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace faceforge;

namespace {

// Raised for stage-order violations so the summary can carry the missing status.
struct PrerequisiteError : Error {
    PrerequisiteError(const std::string& msg, std::string missing) : Error(msg), missing_status(std::move(missing)) {}
    std::string missing_status;
};

struct Common {
    std::string workdir;
    std::string config;
    std::string model;
    std::uint64_t seed = 0;
    int workers = 1;

    fs::path root() const { return fs::path(workdir); }
    fs::path model_path() const { return model.empty() ? root() / "model.m3dm" : fs::path(model); }
    fs::path manifest_path() const { return root() / "manifest.jsonl"; }
    fs::path plan_path() const { return root() / "plan.json"; }
    fs::path shapes_dir() const { return root() / "shapes"; }
    fs::path embeddings_path() const { return root() / "embeddings.emb"; }
    fs::path network_path() const { return root() / "network.bin"; }
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--workdir", c.workdir, "Working directory")->envname("FACEFORGE_WORKDIR");
    sub->add_option("--config", c.config, "JSON file of option values; command-line flags take precedence");
    sub->add_option("--model", c.model, "Model container (default <workdir>/model.m3dm)");
    sub->add_option("--seed", c.seed, "Global seed");
    sub->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
}

std::string config_value(const json& v)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    return v.dump();
}

// Fills options absent from the command line. Top-level keys apply to every subcommand; an object
// named after the subcommand overrides them.
void apply_config(CLI::App* sub, const fs::path& path)
{
    const auto bytes = binio::read_file(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) {
        throw Error("config " + path.string() + ": top level must be an object");
    }
    std::map<std::string, json> merged;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_object()) {
            merged[k] = v;
        }
    }
    if (j.contains(sub->get_name()) && j[sub->get_name()].is_object()) {
        for (const auto& [k, v] : j[sub->get_name()].items()) {
            merged[k] = v;
        }
    }
    for (const auto& [key, value] : merged) {
        std::string name = key;
        std::replace(name.begin(), name.end(), '_', '-');
        CLI::Option* op = sub->get_option_no_throw("--" + name);
        if (op == nullptr || op->count() > 0 || name == "config") {
            continue;
        }
        std::vector<std::string> inputs;
        if (value.is_array()) {
            for (const auto& e : value) {
                inputs.push_back(config_value(e));
            }
        } else {
            inputs.push_back(config_value(value));
        }
        op->add_result(inputs);
        op->run_callback();
    }
}

void require_workdir(const Common& c)
{
    if (c.workdir.empty()) {
        throw Error("no workdir: pass --workdir or set FACEFORGE_WORKDIR");
    }
    fs::create_directories(c.root());
}

Manifest load_manifest_for(const Common& c, const char* stage)
{
    if (!fs::exists(c.manifest_path())) {
        throw PrerequisiteError(std::string(stage) + " requires a manifest with status 'planned'; run plan first",
                                "planned");
    }
    return load_manifest(c.manifest_path());
}

MorphableModel load_model_for(const Common& c)
{
    if (!fs::exists(c.model_path())) {
        throw NotFoundError("model not found at " + c.model_path().string() + "; run toy-model or pass --model");
    }
    return load_model(c.model_path());
}

std::map<std::string, std::vector<double>> load_betas(const Common& c, const Manifest& manifest, const MorphableModel& model)
{
    std::map<std::string, std::vector<double>> betas;
    for (const auto& r : manifest) {
        if (betas.count(r.shape_id)) {
            continue;
        }
        const fs::path p = c.root() / r.beta_ref;
        if (!fs::exists(p)) {
            throw NotFoundError("missing beta file for shape '" + r.shape_id + "' (" + p.string() + "); run gen-shapes");
        }
        betas.emplace(r.shape_id, read_beta(p, model.n_shape));
    }
    return betas;
}

Mesh to_mm(Mesh mesh, double unit_to_mm)
{
    for (auto& v : mesh.vertices) {
        v *= unit_to_mm;
    }
    return mesh;
}

Mesh shape_mesh(const MorphableModel& model, const std::vector<double>& beta)
{
    Coefficients c = Coefficients::zeros(model);
    c.beta = beta;
    return to_mm(decode(model, c), model.unit_to_mm);
}

// --- toy-model -------------------------------------------------------------------------------

struct ToyModelArgs {
    std::size_t vertices = 500;
    std::size_t n_shape = 20;
    std::size_t n_expr = 10;
    bool force = false;
};

json cmd_toy_model(const Common& c, const ToyModelArgs& a)
{
    require_workdir(c);
    const fs::path out = c.model_path();
    if (fs::exists(out) && !a.force) {
        const auto existing = load_model(out);
        return {{"model", out.string()}, {"n_vertices", existing.n_vertices}, {"n_shape", existing.n_shape}, {"created", false}};
    }
    const auto model = make_toy_model(substream_seed(c.seed, "toy-model"), a.vertices, a.n_shape, a.n_expr);
    save_model(model, out);
    return {{"model", out.string()}, {"n_vertices", model.n_vertices}, {"n_shape", model.n_shape}, {"created", true}};
}

// --- gen-shapes ------------------------------------------------------------------------------

struct GenShapesArgs {
    std::size_t n_shapes = 10000;
    double sigma = 0.8;
    bool force = false;
};

json cmd_gen_shapes(const Common& c, const GenShapesArgs& a)
{
    require_workdir(c);
    if (!(a.sigma > 0.0)) {
        throw Error("gen-shapes: sigma must be positive");
    }
    const auto model = load_model_for(c);
    const fs::path dir = c.shapes_dir();
    if (fs::exists(dir / "index.json") && !a.force) {
        throw Error("shape store already exists at " + dir.string() + "; pass --force to overwrite");
    }
    Rng rng(substream_seed(c.seed, "shapes"));
    const auto coeffs = sample_shape(rng, a.sigma, a.n_shapes, model);
    ShapeIndex index;
    index.n_coeffs = model.n_shape;
    index.sigma = a.sigma;
    index.seed = c.seed;
    for (std::size_t s = 0; s < coeffs.size(); ++s) {
        const std::string id = shape_id_for(s);
        const std::string rel = id + ".f32";
        write_beta(dir / rel, coeffs[s].beta);
        index.shapes.push_back({id, rel});
    }
    save_shape_index(index, dir);
    return {{"shapes", index.shapes.size()}, {"n_coeffs", index.n_coeffs}, {"store", dir.string()}};
}

// --- plan ------------------------------------------------------------------------------------

struct PlanArgs {
    DatasetPlan plan;
    std::vector<std::string> occlusions = {"glasses", "sunglasses", "mask"};
    bool force = false;
};

json cmd_plan(const Common& c, PlanArgs a)
{
    require_workdir(c);
    a.plan.master_seed = c.seed;
    a.plan.occlusions.clear();
    for (const auto& o : a.occlusions) {
        a.plan.occlusions.push_back(parse_occlusion(o));
    }
    a.plan.validate();
    const std::string plan_text = plan_to_json(a.plan);
    ManifestLock lock(c.manifest_path());
    if (fs::exists(c.manifest_path()) && fs::exists(c.plan_path()) && !a.force) {
        const auto existing = binio::read_file(c.plan_path());
        if (std::string(existing.begin(), existing.end()) == plan_text) {
            const auto m = load_manifest(c.manifest_path());
            return {{"records", m.size()}, {"created", false}};
        }
        throw Error("a different plan already exists in " + c.root().string() + "; pass --force to replace it");
    }
    const Manifest m = plan_dataset(a.plan);
    save_manifest(m, c.manifest_path());
    binio::write_text_atomic(c.plan_path(), plan_text);
    const auto report = balance_report(m, a.plan);
    return {{"records", m.size()}, {"created", true}, {"balanced", report.pass}};
}

// --- render ----------------------------------------------------------------------------------

struct RenderArgs {
    int resolution = kDefaultResolution;
    bool verify = false;
    bool save_buffers = false;
    bool noise_background = false;
};

bool depth_png_ok(const fs::path& png, int resolution)
{
    try {
        const auto img = import_png(png);
        return img.width == resolution && img.height == resolution && img.metadata.has_value();
    } catch (const std::exception&) {
        return false;
    }
}

json cmd_render(const Common& c, const RenderArgs& a)
{
    require_workdir(c);
    ManifestLock lock(c.manifest_path());
    Manifest manifest = load_manifest_for(c, "render");
    const auto model = load_model_for(c);

    // One job per depth image; records sharing it are updated together.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        groups[manifest[i].depth_image_path].push_back(i);
    }
    std::vector<std::string> todo;
    std::size_t verified_bad = 0;
    for (const auto& [path, members] : groups) {
        bool need = false;
        for (auto i : members) {
            need = need || manifest[i].status == Status::Planned;
        }
        if (!need && a.verify && !depth_png_ok(c.root() / path, a.resolution)) {
            need = true;
            ++verified_bad;
        }
        if (need) {
            todo.push_back(path);
        }
    }

    std::map<std::string, std::vector<double>> beta_cache;
    constexpr std::size_t kChunk = 32;
    std::size_t rendered = 0;
    std::size_t status_updates = 0;
    for (std::size_t begin = 0; begin < todo.size(); begin += kChunk) {
        const std::size_t n = std::min(kChunk, todo.size() - begin);
        std::vector<Mesh> meshes(n);
        std::vector<kernels::RenderJob> jobs(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& rec = manifest[groups[todo[begin + k]].front()];
            const fs::path beta_path = c.root() / rec.beta_ref;
            if (!fs::exists(beta_path)) {
                throw NotFoundError("missing beta file for shape '" + rec.shape_id + "' (" + beta_path.string() + ")");
            }
            meshes[k] = shape_mesh(model, read_beta(beta_path, model.n_shape));
            Camera cam;
            cam.fov_degrees = rec.camera_fov;
            cam.distance = rec.camera_distance;
            cam.resolution = a.resolution;
            jobs[k] = {&meshes[k], cam};
        }
        const auto buffers = c.workers == 1 ? kernels::render_batch_serial(jobs) : kernels::render_batch_omp(jobs, c.workers);
        for (std::size_t k = 0; k < n; ++k) {
            const std::string& rel = todo[begin + k];
            NormalizeOptions opts;
            opts.noise_background = a.noise_background;
            opts.noise_seed = substream_seed(c.seed, "depth-noise", rel);
            const fs::path png = c.root() / rel;
            export_png(normalize_depth(buffers[k], opts), png);
            if (a.save_buffers) {
                fs::path dbuf = png;
                dbuf.replace_extension(".dbuf");
                save_depth_buffer(buffers[k], dbuf);
            }
            ++rendered;
            for (auto i : groups[rel]) {
                if (manifest[i].status == Status::Planned) {
                    manifest[i].status = Status::Rendered;
                    ++status_updates;
                }
            }
        }
    }
    if (status_updates > 0) {
        save_manifest(manifest, c.manifest_path());
    }
    return {{"depth_images", groups.size()}, {"rendered", rendered}, {"rerendered_after_verify", verified_bad},
            {"status_updates", status_updates}};
}

// --- embed -----------------------------------------------------------------------------------

struct EmbedArgs {
    std::string mode = "synthetic";
    std::string import_dir;
    double nuisance_scale = 0.3;
    std::size_t nuisance_dim = 0; // 0: the full complement of the shape subspace
};

json cmd_embed(const Common& c, const EmbedArgs& a)
{
    require_workdir(c);
    if (a.mode != "synthetic" && a.mode != "import") {
        throw Error("embed: --mode must be synthetic or import");
    }
    ManifestLock lock(c.manifest_path());
    Manifest manifest = load_manifest_for(c, "embed");
    const std::string store_rel = c.embeddings_path().filename().string();

    std::map<std::string, Embedding> existing;
    if (fs::exists(c.embeddings_path())) {
        for (auto& e : read_embeddings(c.embeddings_path())) {
            existing.emplace(e.image_id, std::move(e));
        }
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& r = manifest[i];
        if (a.mode == "synthetic" && r.status < Status::Rendered) {
            throw PrerequisiteError("embed requires status 'rendered' but record '" + r.image_id + "' is '" +
                                        std::string(to_string(r.status)) + "'; run render first",
                                    "rendered");
        }
        if (a.mode == "import" && r.status < Status::Generated) {
            throw PrerequisiteError("embed --mode import requires status 'generated' but record '" + r.image_id +
                                        "' is '" + std::string(to_string(r.status)) + "'",
                                    "generated");
        }
        if (!(r.embedding_path == store_rel && existing.count(r.image_id))) {
            todo.push_back(i);
        }
    }

    std::vector<Embedding> fresh(todo.size());
    if (a.mode == "synthetic") {
        const auto model = load_model_for(c);
        const auto betas = load_betas(c, manifest, model);
        const std::size_t q = a.nuisance_dim == 0 ? kEmbeddingDim - model.n_shape : a.nuisance_dim;
        const auto embedder = SyntheticEmbedder::make(substream_seed(c.seed, "embedder"), model.n_shape, q,
                                                      a.nuisance_scale);
        const auto n = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(static) num_threads(kernels::resolve_workers(c.workers))
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            const auto& r = manifest[todo[static_cast<std::size_t>(k)]];
            fresh[static_cast<std::size_t>(k)] = synth_embed(embedder, betas.at(r.shape_id), r);
        }
    } else {
        if (a.import_dir.empty()) {
            throw Error("embed --mode import needs --import-dir");
        }
        for (std::size_t k = 0; k < todo.size(); ++k) {
            const auto& r = manifest[todo[k]];
            const fs::path p = fs::path(a.import_dir) / (r.image_id + ".f32");
            if (!fs::exists(p)) {
                throw NotFoundError("missing imported embedding for image '" + r.image_id + "' (" + p.string() + ")");
            }
            const auto raw = read_beta(p, kEmbeddingDim);
            fresh[k] = make_embedding(r.image_id, raw);
        }
    }
    for (std::size_t k = 0; k < todo.size(); ++k) {
        existing[fresh[k].image_id] = std::move(fresh[k]);
        auto& r = manifest[todo[k]];
        r.embedding_path = store_rel;
        if (r.status == Status::Generated) {
            r.status = Status::Embedded;
        }
    }
    if (!todo.empty()) {
        // Store order follows the manifest so reruns are byte-identical.
        std::vector<Embedding> all;
        all.reserve(manifest.size());
        std::set<std::string> seen;
        for (const auto& r : manifest) {
            auto it = existing.find(r.image_id);
            if (it != existing.end() && seen.insert(r.image_id).second) {
                all.push_back(it->second);
            }
        }
        write_embeddings(all, c.embeddings_path());
        save_manifest(manifest, c.manifest_path());
    }
    return {{"mode", a.mode}, {"embedded", todo.size()}, {"total", manifest.size()}, {"store", c.embeddings_path().string()}};
}

// --- train -----------------------------------------------------------------------------------

struct TrainArgs {
    TrainConfig config;
    std::string activation = "relu";
    bool force = false;
};

json train_config_json(const TrainConfig& t)
{
    return {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay}, {"beta1", t.beta1}, {"beta2", t.beta2},
            {"eps", t.eps}, {"max_epochs", t.max_epochs}, {"patience", t.patience}, {"batch_size", t.batch_size},
            {"seed", t.seed}, {"hidden", t.hidden}, {"input_scale", t.input_scale}, {"activation", std::string(to_string(t.activation))}};
}

json cmd_train(const Common& c, TrainArgs a)
{
    require_workdir(c);
    a.config.activation = parse_activation(a.activation);
    a.config.seed = substream_seed(c.seed, "train");
    a.config.workers = c.workers;
    a.config.validate();
    const Manifest manifest = load_manifest_for(c, "train");
    for (const auto& r : manifest) {
        if (r.embedding_path.empty()) {
            throw PrerequisiteError("train requires embeddings but record '" + r.image_id +
                                        "' has none (status 'embedded' or a synthetic embedding); run embed first",
                                    "embedded");
        }
    }
    if (!fs::exists(c.embeddings_path())) {
        throw PrerequisiteError("train requires the embedding store " + c.embeddings_path().string() + "; run embed first",
                                "embedded");
    }
    const fs::path summary_path = c.root() / "train.json";
    const json cfg = train_config_json(a.config);
    if (!a.force && fs::exists(c.network_path()) && fs::exists(summary_path)) {
        const auto bytes = binio::read_file(summary_path);
        const auto prev = json::parse(bytes.begin(), bytes.end());
        if (prev.value("config", json()) == cfg) {
            json out = prev;
            out.erase("config");
            out["trained"] = false;
            return out;
        }
    }
    const auto model = load_model_for(c);
    const auto betas = load_betas(c, manifest, model);
    const auto store = EmbeddingStore::load(c.embeddings_path());
    const auto mask = RegionMask::from_model(model);
    const auto result = train(manifest, store, betas, model, mask, a.config);
    save_network(result.network, c.network_path());
    binio::write_text_atomic(c.root() / "history.csv", result.history.to_csv());

    json summary;
    summary["epochs"] = result.history.epochs.back().epoch;
    summary["best_epoch"] = result.history.best_epoch;
    summary["best_val_loss"] = result.history.best_val_loss();
    summary["zero_baseline_val_loss"] = zero_prediction_loss(manifest, Split::Val, betas, model, mask);
    summary["stopped_early"] = result.history.stopped_early;
    summary["network"] = c.network_path().string();
    summary["config"] = cfg;
    binio::write_text_atomic(summary_path, summary.dump(2) + "\n");
    summary.erase("config");
    summary["trained"] = true;
    return summary;
}

// --- evaluate --------------------------------------------------------------------------------

struct EvaluateArgs {
    std::string pred_dir;
    std::string scan_dir;
    std::string landmarks;
    std::string out_dir;
    bool no_scale = false;
};

fs::path find_mesh(const fs::path& dir, const std::string& stem)
{
    for (const char* ext : {".ply", ".obj", ".PLY", ".OBJ"}) {
        const fs::path p = dir / (stem + ext);
        if (fs::exists(p)) {
            return p;
        }
    }
    return {};
}

json cmd_evaluate(const Common& c, const EvaluateArgs& a)
{
    require_workdir(c);
    std::vector<EvalInput> inputs;
    std::string mode;
    if (!a.pred_dir.empty()) {
        // File mode: <pred-dir>/<id>.{ply,obj} against <scan-dir>/<id>.{ply,obj} with <scan-dir>/<id>.json landmarks.
        mode = "files";
        if (a.scan_dir.empty() || a.landmarks.empty()) {
            throw Error("evaluate --pred-dir also needs --scan-dir and --landmarks");
        }
        const auto indices = read_landmark_indices(a.landmarks);
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(a.pred_dir)) {
            const auto ext = entry.path().extension().string();
            if (ext == ".ply" || ext == ".obj" || ext == ".PLY" || ext == ".OBJ") {
                ids.push_back(entry.path().stem().string());
            }
        }
        std::sort(ids.begin(), ids.end());
        for (const auto& id : ids) {
            EvalInput in;
            in.image_id = id;
            in.prediction = read_mesh(find_mesh(a.pred_dir, id));
            const fs::path scan = find_mesh(a.scan_dir, id);
            if (scan.empty()) {
                throw NotFoundError("no scan for prediction '" + id + "' in " + a.scan_dir);
            }
            in.scan_points = read_mesh(scan).vertices;
            const fs::path lm = fs::path(a.scan_dir) / (id + ".json");
            if (fs::exists(lm)) {
                match_landmarks(indices, in.prediction, read_landmark_points(lm), in.pred_landmarks, in.scan_landmarks);
            }
            inputs.push_back(std::move(in));
        }
    } else {
        // Pipeline mode: Val predictions against ground-truth shapes.
        mode = "pipeline";
        const Manifest manifest = load_manifest_for(c, "evaluate");
        if (!fs::exists(c.network_path())) {
            throw PrerequisiteError("evaluate requires a trained network at " + c.network_path().string() + "; run train first",
                                    "embedded");
        }
        const auto model = load_model_for(c);
        const auto net = load_network(c.network_path());
        check_compatible(net, model);
        const auto store = EmbeddingStore::load(c.embeddings_path());
        const auto betas = load_betas(c, manifest, model);
        const auto indices = a.landmarks.empty() ? default_landmark_indices(model) : read_landmark_indices(a.landmarks);
        std::map<std::string, Mesh> gt_cache;
        for (const auto& r : manifest) {
            if (r.split != Split::Val) {
                continue;
            }
            if (!store.contains(r.image_id)) {
                throw PrerequisiteError("missing embedding for image '" + r.image_id + "'; run embed first", "embedded");
            }
            const auto& e = store.lookup(r.image_id);
            const auto out = forward(net, e);
            EvalInput in;
            in.image_id = r.image_id;
            in.prediction = shape_mesh(model, std::vector<double>(out.begin(), out.end()));
            auto it = gt_cache.find(r.shape_id);
            if (it == gt_cache.end()) {
                it = gt_cache.emplace(r.shape_id, shape_mesh(model, betas.at(r.shape_id))).first;
            }
            in.scan_points = it->second.vertices;
            for (const auto& [name, idx] : indices) {
                in.pred_landmarks.push_back(in.prediction.vertices.at(idx));
                in.scan_landmarks.push_back(it->second.vertices.at(idx));
            }
            inputs.push_back(std::move(in));
        }
    }
    EvalOptions opts;
    opts.with_scale = !a.no_scale;
    opts.workers = c.workers;
    const auto report = evaluate(inputs, opts);
    const fs::path out = a.out_dir.empty() ? c.root() / "eval" : fs::path(a.out_dir);
    binio::write_text_atomic(out / "per_image.csv", report.per_image_csv());
    binio::write_text_atomic(out / "summary.json", report.summary_json());
    binio::write_text_atomic(out / "cumulative_error.csv", report.cumulative_error_csv());
    return {{"mode", mode}, {"images", report.images.size()}, {"failed", report.n_failed},
            {"median_mm", report.median}, {"mean_mm", report.mean}, {"std_mm", report.std}, {"report", out.string()}};
}

// --- report ----------------------------------------------------------------------------------

json cmd_report(const Common& c)
{
    require_workdir(c);
    const Manifest manifest = load_manifest_for(c, "report");
    if (!fs::exists(c.plan_path())) {
        throw PrerequisiteError("report requires plan.json; run plan first", "planned");
    }
    const auto bytes = binio::read_file(c.plan_path());
    const DatasetPlan plan = plan_from_json(std::string(bytes.begin(), bytes.end()));
    const auto report = balance_report(manifest, plan);
    binio::write_text_atomic(c.root() / "report" / "balance.json", report.to_json());
    binio::write_text_atomic(c.root() / "report" / "balance_table.csv", report.table_csv());
    json checks = json::object();
    for (const auto& ch : report.checks) {
        checks[ch.name] = ch.pass ? "PASS" : "FAIL";
    }
    return {{"ok", report.pass}, {"records", report.total}, {"balance", report.pass ? "PASS" : "FAIL"},
            {"max_deviation", report.max_deviation}, {"checks", checks}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"faceforge: synthetic face dataset generation, shape regression and scan evaluation"};
    app.require_subcommand(1);

    Common common;

    ToyModelArgs toy;
    auto* toy_cmd = app.add_subcommand("toy-model", "Write a procedural head model");
    add_common(toy_cmd, common);
    toy_cmd->add_option("--vertices", toy.vertices);
    toy_cmd->add_option("--n-shape", toy.n_shape);
    toy_cmd->add_option("--n-expr", toy.n_expr);
    toy_cmd->add_flag("--force", toy.force);

    GenShapesArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-shapes", "Sample shape coefficients into the shape store");
    add_common(gen_cmd, common);
    gen_cmd->add_option("--n-shapes", gen.n_shapes);
    gen_cmd->add_option("--sigma", gen.sigma);
    gen_cmd->add_flag("--force", gen.force);

    PlanArgs plan;
    auto* plan_cmd = app.add_subcommand("plan", "Write the balanced image manifest");
    add_common(plan_cmd, common);
    plan_cmd->add_option("--n-shapes", plan.plan.n_shapes);
    plan_cmd->add_option("--views", plan.plan.views_per_shape);
    plan_cmd->add_option("--images", plan.plan.images_per_view);
    plan_cmd->add_option("--occlusion-rate", plan.plan.occlusion_rate);
    plan_cmd->add_option("--races", plan.plan.races);
    plan_cmd->add_option("--genders", plan.plan.genders);
    plan_cmd->add_option("--occlusions", plan.occlusions);
    plan_cmd->add_option("--split", plan.plan.split_fraction);
    plan_cmd->add_option("--distance-min", plan.plan.distance_min);
    plan_cmd->add_option("--distance-max", plan.plan.distance_max);
    plan_cmd->add_option("--fov", plan.plan.fov_degrees);
    plan_cmd->add_option("--inference-steps", plan.plan.inference_steps);
    plan_cmd->add_flag("--force", plan.force);

    RenderArgs render;
    auto* render_cmd = app.add_subcommand("render", "Render depth conditioning images");
    add_common(render_cmd, common);
    render_cmd->add_option("--resolution", render.resolution);
    render_cmd->add_flag("--verify", render.verify, "Re-render depth images that are missing or unreadable");
    render_cmd->add_flag("--save-buffers", render.save_buffers, "Also write float depth buffers (.dbuf)");
    render_cmd->add_flag("--noise-background", render.noise_background);

    EmbedArgs embed;
    auto* embed_cmd = app.add_subcommand("embed", "Attach identity embeddings to records");
    add_common(embed_cmd, common);
    embed_cmd->add_option("--mode", embed.mode)->check(CLI::IsMember({"synthetic", "import"}));
    embed_cmd->add_option("--import-dir", embed.import_dir);
    embed_cmd->add_option("--nuisance-scale", embed.nuisance_scale);
    embed_cmd->add_option("--nuisance-dim", embed.nuisance_dim);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the embedding-to-shape network");
    add_common(train_cmd, common);
    train_cmd->add_option("--lr", tr.config.learning_rate);
    train_cmd->add_option("--weight-decay", tr.config.weight_decay);
    train_cmd->add_option("--beta1", tr.config.beta1);
    train_cmd->add_option("--beta2", tr.config.beta2);
    train_cmd->add_option("--eps", tr.config.eps);
    train_cmd->add_option("--max-epochs", tr.config.max_epochs);
    train_cmd->add_option("--patience", tr.config.patience);
    train_cmd->add_option("--batch-size", tr.config.batch_size);
    train_cmd->add_option("--hidden", tr.config.hidden);
    train_cmd->add_option("--input-scale", tr.config.input_scale);
    train_cmd->add_option("--activation", tr.activation)->check(CLI::IsMember({"relu", "leaky_relu"}));
    train_cmd->add_flag("--force", tr.force);

    EvaluateArgs ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "Scan-to-mesh evaluation");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--pred-dir", ev.pred_dir);
    eval_cmd->add_option("--scan-dir", ev.scan_dir);
    eval_cmd->add_option("--landmarks", ev.landmarks, "Model landmark indices JSON");
    eval_cmd->add_option("--out-dir", ev.out_dir);
    eval_cmd->add_flag("--no-scale", ev.no_scale);

    auto* report_cmd = app.add_subcommand("report", "Balance report for the manifest");
    add_common(report_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        json line = {{"ok", false}, {"error", e.what()}};
        std::cout << line.dump() << std::endl;
        return e.get_exit_code() != 0 ? e.get_exit_code() : 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    json summary;
    try {
        if (!common.config.empty()) {
            apply_config(sub, common.config);
        }
        if (sub == toy_cmd) {
            summary = cmd_toy_model(common, toy);
        } else if (sub == gen_cmd) {
            summary = cmd_gen_shapes(common, gen);
        } else if (sub == plan_cmd) {
            summary = cmd_plan(common, plan);
        } else if (sub == render_cmd) {
            summary = cmd_render(common, render);
        } else if (sub == embed_cmd) {
            summary = cmd_embed(common, embed);
        } else if (sub == train_cmd) {
            summary = cmd_train(common, tr);
        } else if (sub == eval_cmd) {
            summary = cmd_evaluate(common, ev);
        } else {
            summary = cmd_report(common);
        }
        if (!summary.contains("ok")) {
            json with_ok = {{"ok", true}};
            with_ok.update(summary);
            summary = with_ok;
        }
    } catch (const PrerequisiteError& e) {
        summary = {{"ok", false}, {"error", e.what()}, {"missing_status", e.missing_status}};
    } catch (const std::exception& e) {
        summary = {{"ok", false}, {"error", e.what()}};
    }
    json line = {{"command", sub->get_name()}};
    line.update(summary);
    // "ok" first keeps the line easy to grep.
    json ordered = {{"ok", line["ok"]}};
    ordered.update(line);
    std::cout << ordered.dump() << std::endl;
    return ordered["ok"].get<bool>() ? 0 : 1;
}
