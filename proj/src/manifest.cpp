#include "faceforge/manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"
#include "faceforge/render.hpp"
#include "faceforge/rng.hpp"

namespace faceforge {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kNegativePrompt = "artefacts, low resolution";
constexpr std::string_view kPromptSuffix = "studio portrait, profile picture, dslr";

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<E, std::string_view> (&names)[N], const char* what)
{
    for (const auto& [e, name] : names) {
        if (name == s) {
            return e;
        }
    }
    throw Error(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::pair<Occlusion, std::string_view> kOcclusionNames[] = {
    {Occlusion::None, "none"}, {Occlusion::Glasses, "glasses"}, {Occlusion::Sunglasses, "sunglasses"}, {Occlusion::Mask, "mask"}};
constexpr std::pair<Split, std::string_view> kSplitNames[] = {{Split::Train, "train"}, {Split::Val, "val"}};
constexpr std::pair<Status, std::string_view> kStatusNames[] = {
    {Status::Planned, "planned"}, {Status::Rendered, "rendered"}, {Status::Generated, "generated"}, {Status::Embedded, "embedded"}};

bool contains(const std::vector<std::string>& v, std::string_view s)
{
    return std::find(v.begin(), v.end(), s) != v.end();
}

/// Max minus min over `counts`, plus the labels whose count lies outside {floor, ceil} of the mean.
BalanceCheck check_balance(std::string name, const std::vector<std::pair<std::string, std::size_t>>& counts)
{
    BalanceCheck check{std::move(name), 0, true, {}};
    if (counts.empty()) {
        return check;
    }
    std::size_t lo = counts.front().second;
    std::size_t hi = lo;
    std::size_t total = 0;
    for (const auto& [label, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
        total += n;
    }
    check.max_deviation = hi - lo;
    check.pass = check.max_deviation <= 1;
    if (!check.pass) {
        const std::size_t floor_mean = total / counts.size();
        const std::size_t ceil_mean = floor_mean + (total % counts.size() != 0 ? 1 : 0);
        for (const auto& [label, n] : counts) {
            if (n < floor_mean || n > ceil_mean) {
                check.offending.push_back(label + "=" + std::to_string(n));
            }
        }
    }
    return check;
}

} // namespace

std::string_view to_string(Occlusion o) { return kOcclusionNames[static_cast<int>(o)].second; }
std::string_view to_string(Split s) { return kSplitNames[static_cast<int>(s)].second; }
std::string_view to_string(Status s) { return kStatusNames[static_cast<int>(s)].second; }
Occlusion parse_occlusion(std::string_view s) { return parse_enum(s, kOcclusionNames, "occlusion"); }
Split parse_split(std::string_view s) { return parse_enum(s, kSplitNames, "split"); }
Status parse_status(std::string_view s) { return parse_enum(s, kStatusNames, "status"); }

std::string_view occlusion_text(Occlusion o)
{
    switch (o) {
    case Occlusion::None: return "";
    case Occlusion::Glasses: return "glasses";
    case Occlusion::Sunglasses: return "sunglasses";
    case Occlusion::Mask: return "surgical mask covering face";
    }
    return "";
}

const std::vector<std::string>& default_races()
{
    static const std::vector<std::string> races = {"White",           "Black",          "Indian", "East Asian",
                                                   "Southeast Asian", "Middle Eastern", "Latino"};
    return races;
}

const std::vector<std::string>& default_genders()
{
    static const std::vector<std::string> genders = {"woman", "man"};
    return genders;
}

void DatasetPlan::validate() const
{
    if (n_shapes == 0 || views_per_shape == 0 || images_per_view == 0) {
        throw Error("plan: shapes, views and images must all be at least 1");
    }
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
        throw Error("plan: occlusion_rate must lie in [0, 1]");
    }
    if (!(split_fraction >= 0.0 && split_fraction <= 1.0)) {
        throw Error("plan: split_fraction must lie in [0, 1]");
    }
    if (races.empty() || genders.empty() || occlusions.empty()) {
        throw Error("plan: category lists must be non-empty");
    }
    if (std::find(occlusions.begin(), occlusions.end(), Occlusion::None) != occlusions.end()) {
        throw Error("plan: occlusion list holds occlusion types; 'none' is implied");
    }
    if (total_images() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error("plan: too many images for 32-bit generation seeds");
    }
    if (!(distance_min > 0.0 && distance_min <= distance_max)) {
        throw Error("plan: camera distances need 0 < min <= max");
    }
}

std::string shape_id_for(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "shape_%05zu", index);
    return buf;
}

std::string depth_path_for(std::string_view shape_id, std::size_t view)
{
    return "depth/" + std::string(shape_id) + "_v" + std::to_string(view) + ".png";
}

Prompt build_prompt(Occlusion occlusion, std::string_view race, std::string_view gender,
                    const std::vector<std::string>& races, const std::vector<std::string>& genders)
{
    if (!contains(races, race)) {
        throw Error("build_prompt: unknown race '" + std::string(race) + "'");
    }
    if (!contains(genders, gender)) {
        throw Error("build_prompt: unknown gender '" + std::string(gender) + "'");
    }
    std::string positive;
    if (occlusion != Occlusion::None) {
        positive += occlusion_text(occlusion);
        positive += ", ";
    }
    positive += race;
    positive += ' ';
    positive += gender;
    positive += ", ";
    positive += kPromptSuffix;
    return {positive, std::string(kNegativePrompt)};
}

Manifest plan_dataset(const DatasetPlan& plan)
{
    plan.validate();
    const std::size_t total = plan.total_images();
    const std::size_t cells = plan.races.size() * plan.genders.size();
    const auto n_occluded = static_cast<std::size_t>(std::llround(plan.occlusion_rate * static_cast<double>(total)));

    // position[r] = slot of record r in the seeded deal order.
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng deal_rng(substream_seed(plan.master_seed, "plan-categories"));
    shuffle(order.begin(), order.end(), deal_rng);
    std::vector<std::size_t> position(total);
    for (std::size_t p = 0; p < total; ++p) {
        position[order[p]] = p;
    }

    std::vector<std::size_t> shapes(plan.n_shapes);
    std::iota(shapes.begin(), shapes.end(), 0);
    Rng split_rng(substream_seed(plan.master_seed, "plan-split"));
    shuffle(shapes.begin(), shapes.end(), split_rng);
    const auto n_train = static_cast<std::size_t>(std::llround(plan.split_fraction * static_cast<double>(plan.n_shapes)));
    std::vector<Split> shape_split(plan.n_shapes, Split::Val);
    for (std::size_t i = 0; i < n_train; ++i) {
        shape_split[shapes[i]] = Split::Train;
    }

    const auto seed_base = static_cast<std::uint32_t>(substream_seed(plan.master_seed, "generation"));

    Manifest manifest;
    manifest.reserve(total);
    std::size_t r = 0;
    for (std::size_t s = 0; s < plan.n_shapes; ++s) {
        const std::string shape_id = shape_id_for(s);
        for (std::size_t v = 0; v < plan.views_per_shape; ++v) {
            Rng cam_rng(substream_seed(plan.master_seed, "camera", {s, v}));
            const Camera cam = sample_camera(cam_rng, plan.distance_min, plan.distance_max);
            for (std::size_t i = 0; i < plan.images_per_view; ++i, ++r) {
                const std::size_t p = position[r];
                const std::size_t cell = p % cells;
                ImageRecord rec;
                rec.image_id = shape_id + "_v" + std::to_string(v) + "_i" + std::to_string(i);
                rec.shape_id = shape_id;
                rec.view_index = v;
                rec.image_index = i;
                rec.beta_ref = "shapes/" + shape_id + ".f32";
                rec.camera_distance = cam.distance;
                rec.camera_fov = plan.fov_degrees;
                rec.depth_image_path = depth_path_for(shape_id, v);
                rec.race = plan.races[cell / plan.genders.size()];
                rec.gender = plan.genders[cell % plan.genders.size()];
                rec.occlusion = p < n_occluded ? plan.occlusions[p % plan.occlusions.size()] : Occlusion::None;
                auto prompt = build_prompt(rec.occlusion, rec.race, rec.gender, plan.races, plan.genders);
                rec.prompt_positive = std::move(prompt.positive);
                rec.prompt_negative = std::move(prompt.negative);
                rec.generation_seed = mix32(seed_base + static_cast<std::uint32_t>(r));
                rec.inference_steps = plan.inference_steps;
                rec.images_per_prompt = plan.images_per_view;
                rec.split = shape_split[s];
                manifest.push_back(std::move(rec));
            }
        }
    }
    return manifest;
}

BalanceReport balance_report(const Manifest& manifest, const DatasetPlan& plan)
{
    if (manifest.empty()) {
        throw Error("balance_report: manifest is empty");
    }
    BalanceReport rep;
    rep.total = manifest.size();
    for (const auto& race : plan.races) {
        for (const auto& gender : plan.genders) {
            rep.cells[{race, gender}] = 0;
            rep.occluded_cells[{race, gender}] = 0;
        }
    }
    std::map<std::string, std::set<Split>> shape_splits;
    std::size_t occluded = 0;
    std::map<Occlusion, std::size_t> types;
    for (auto o : plan.occlusions) {
        types[o] = 0;
    }
    for (const auto& rec : manifest) {
        ++rep.cells[{rec.race, rec.gender}];
        ++rep.occlusions[rec.occlusion];
        ++rep.split_images[rec.split];
        ++rep.table[{rec.race, rec.gender, rec.occlusion, rec.split}];
        shape_splits[rec.shape_id].insert(rec.split);
        if (rec.occlusion != Occlusion::None) {
            ++occluded;
            ++rep.occluded_cells[{rec.race, rec.gender}];
            ++types[rec.occlusion];
        }
    }

    auto cell_counts = [](const auto& cells) {
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& [key, n] : cells) {
            out.emplace_back(key.first + "/" + key.second, n);
        }
        return out;
    };
    rep.checks.push_back(check_balance("race_gender", cell_counts(rep.cells)));
    if (occluded > 0) {
        rep.checks.push_back(check_balance("race_gender_occluded", cell_counts(rep.occluded_cells)));
        std::vector<std::pair<std::string, std::size_t>> type_counts;
        for (const auto& [o, n] : types) {
            type_counts.emplace_back(std::string(to_string(o)), n);
        }
        rep.checks.push_back(check_balance("occlusion_type", type_counts));
    }

    const auto want_occluded = static_cast<std::size_t>(std::llround(plan.occlusion_rate * static_cast<double>(rep.total)));
    BalanceCheck quota{"occlusion_quota", occluded > want_occluded ? occluded - want_occluded : want_occluded - occluded, true, {}};
    quota.pass = quota.max_deviation == 0;
    if (!quota.pass) {
        quota.offending.push_back("occluded=" + std::to_string(occluded) + " expected " + std::to_string(want_occluded));
    }
    rep.checks.push_back(quota);

    BalanceCheck leak{"split_disjoint", 0, true, {}};
    for (const auto& [shape, splits] : shape_splits) {
        if (splits.size() > 1) {
            leak.pass = false;
            ++leak.max_deviation;
            leak.offending.push_back(shape);
        } else {
            ++rep.split_shapes[*splits.begin()];
        }
    }
    rep.checks.push_back(leak);

    for (const auto& c : rep.checks) {
        if (c.name != "split_disjoint" && c.name != "occlusion_quota") {
            rep.max_deviation = std::max(rep.max_deviation, c.max_deviation);
        }
        rep.pass = rep.pass && c.pass;
    }
    return rep;
}

std::string BalanceReport::to_json() const
{
    ojson j;
    j["total"] = total;
    j["pass"] = pass;
    j["max_deviation"] = max_deviation;
    ojson jc = ojson::object();
    for (const auto& [k, n] : cells) {
        jc[k.first + "/" + k.second] = n;
    }
    j["race_gender"] = jc;
    ojson jo = ojson::object();
    for (const auto& [k, n] : occluded_cells) {
        jo[k.first + "/" + k.second] = n;
    }
    j["race_gender_occluded"] = jo;
    ojson jocc = ojson::object();
    for (const auto& [o, n] : occlusions) {
        jocc[std::string(to_string(o))] = n;
    }
    j["occlusion"] = jocc;
    ojson js = ojson::object();
    for (const auto& [s, n] : split_images) {
        js[std::string(to_string(s))] = {{"images", n}, {"shapes", split_shapes.count(s) ? split_shapes.at(s) : 0}};
    }
    j["split"] = js;
    ojson checks_json = ojson::array();
    for (const auto& c : checks) {
        checks_json.push_back({{"name", c.name}, {"max_deviation", c.max_deviation}, {"pass", c.pass}, {"offending", c.offending}});
    }
    j["checks"] = checks_json;
    return j.dump(2);
}

std::string BalanceReport::table_csv() const
{
    std::ostringstream out;
    out << "race,gender,occlusion,split,count\n";
    for (const auto& [k, n] : table) {
        out << std::get<0>(k) << ',' << std::get<1>(k) << ',' << to_string(std::get<2>(k)) << ',' << to_string(std::get<3>(k))
            << ',' << n << '\n';
    }
    return out.str();
}

void validate_manifest(const Manifest& manifest)
{
    std::unordered_set<std::string> ids;
    ids.reserve(manifest.size());
    for (const auto& rec : manifest) {
        if (!ids.insert(rec.image_id).second) {
            throw FormatError(FormatError::Kind::Validation, "duplicate image_id '" + rec.image_id + "'");
        }
        const bool generated = rec.status >= Status::Generated;
        if (generated == rec.image_path.empty()) {
            throw FormatError(FormatError::Kind::Validation,
                              "record '" + rec.image_id + "': image_path must be set exactly when status >= generated");
        }
    }
}

std::string record_to_json_line(const ImageRecord& r)
{
    ojson j;
    j["image_id"] = r.image_id;
    j["shape_id"] = r.shape_id;
    j["view_index"] = r.view_index;
    j["image_index"] = r.image_index;
    j["beta_ref"] = r.beta_ref;
    j["camera"] = {{"distance", r.camera_distance}, {"fov_degrees", r.camera_fov}};
    j["depth_image_path"] = r.depth_image_path;
    j["prompt_positive"] = r.prompt_positive;
    j["prompt_negative"] = r.prompt_negative;
    j["race"] = r.race;
    j["gender"] = r.gender;
    j["occlusion"] = to_string(r.occlusion);
    j["generation_seed"] = r.generation_seed;
    j["inference_steps"] = r.inference_steps;
    j["images_per_prompt"] = r.images_per_prompt;
    j["split"] = to_string(r.split);
    j["image_path"] = r.image_path;
    j["embedding_path"] = r.embedding_path;
    j["status"] = to_string(r.status);
    j["error_note"] = r.error_note;
    return j.dump();
}

ImageRecord record_from_json_line(std::string_view line)
{
    const auto j = ojson::parse(line);
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.shape_id = j.at("shape_id").get<std::string>();
    r.view_index = j.at("view_index").get<std::size_t>();
    r.image_index = j.at("image_index").get<std::size_t>();
    r.beta_ref = j.at("beta_ref").get<std::string>();
    r.camera_distance = j.at("camera").at("distance").get<double>();
    r.camera_fov = j.at("camera").at("fov_degrees").get<double>();
    r.depth_image_path = j.at("depth_image_path").get<std::string>();
    r.prompt_positive = j.at("prompt_positive").get<std::string>();
    r.prompt_negative = j.at("prompt_negative").get<std::string>();
    r.race = j.at("race").get<std::string>();
    r.gender = j.at("gender").get<std::string>();
    r.occlusion = parse_occlusion(j.at("occlusion").get<std::string>());
    r.generation_seed = j.at("generation_seed").get<std::uint32_t>();
    r.inference_steps = j.at("inference_steps").get<int>();
    r.images_per_prompt = j.at("images_per_prompt").get<std::size_t>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.image_path = j.at("image_path").get<std::string>();
    r.embedding_path = j.at("embedding_path").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.error_note = j.value("error_note", std::string());
    return r;
}

Manifest load_manifest(const std::filesystem::path& path)
{
    const auto bytes = binio::read_file(path);
    std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    Manifest manifest;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            manifest.push_back(record_from_json_line(line));
        } catch (const std::exception& e) {
            throw FormatError(FormatError::Kind::MalformedHeader,
                              path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_manifest(manifest);
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path)
{
    validate_manifest(manifest);
    std::string text;
    for (const auto& rec : manifest) {
        text += record_to_json_line(rec);
        text += '\n';
    }
    binio::write_text_atomic(path, text);
}

std::string plan_to_json(const DatasetPlan& p)
{
    ojson j;
    j["n_shapes"] = p.n_shapes;
    j["views_per_shape"] = p.views_per_shape;
    j["images_per_view"] = p.images_per_view;
    j["occlusion_rate"] = p.occlusion_rate;
    j["races"] = p.races;
    j["genders"] = p.genders;
    std::vector<std::string> occ;
    for (auto o : p.occlusions) {
        occ.emplace_back(to_string(o));
    }
    j["occlusions"] = occ;
    j["split_fraction"] = p.split_fraction;
    j["master_seed"] = p.master_seed;
    j["distance_min"] = p.distance_min;
    j["distance_max"] = p.distance_max;
    j["fov_degrees"] = p.fov_degrees;
    j["inference_steps"] = p.inference_steps;
    return j.dump(2);
}

DatasetPlan plan_from_json(std::string_view text)
{
    const auto j = ojson::parse(text);
    DatasetPlan p;
    p.n_shapes = j.at("n_shapes").get<std::size_t>();
    p.views_per_shape = j.at("views_per_shape").get<std::size_t>();
    p.images_per_view = j.at("images_per_view").get<std::size_t>();
    p.occlusion_rate = j.at("occlusion_rate").get<double>();
    p.races = j.at("races").get<std::vector<std::string>>();
    p.genders = j.at("genders").get<std::vector<std::string>>();
    p.occlusions.clear();
    for (const auto& o : j.at("occlusions")) {
        p.occlusions.push_back(parse_occlusion(o.get<std::string>()));
    }
    p.split_fraction = j.at("split_fraction").get<double>();
    p.master_seed = j.at("master_seed").get<std::uint64_t>();
    p.distance_min = j.at("distance_min").get<double>();
    p.distance_max = j.at("distance_max").get<double>();
    p.fov_degrees = j.at("fov_degrees").get<double>();
    p.inference_steps = j.at("inference_steps").get<int>();
    p.validate();
    return p;
}

ManifestLock::ManifestLock(const std::filesystem::path& manifest_path)
{
    std::filesystem::path lock = manifest_path;
    lock += ".lock";
    fd_ = ::open(lock.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw Error("cannot open lock file " + lock.string());
    }
    if (::flock(fd_, LOCK_EX) != 0) {
        ::close(fd_);
        throw Error("cannot lock " + lock.string());
    }
}

ManifestLock::~ManifestLock()
{
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

} // namespace faceforge
