#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace faceforge {

enum class Occlusion { None, Glasses, Sunglasses, Mask };
enum class Split { Train, Val };
enum class Status { Planned = 0, Rendered = 1, Generated = 2, Embedded = 3 };

std::string_view to_string(Occlusion o);
std::string_view to_string(Split s);
std::string_view to_string(Status s);
Occlusion parse_occlusion(std::string_view s);
Split parse_split(std::string_view s);
Status parse_status(std::string_view s);

/// Prompt fragment used for an occlusion type; empty for Occlusion::None.
std::string_view occlusion_text(Occlusion o);

const std::vector<std::string>& default_races();
const std::vector<std::string>& default_genders();

struct DatasetPlan {
    std::size_t n_shapes = 10000;
    std::size_t views_per_shape = 5;
    std::size_t images_per_view = 5;
    double occlusion_rate = 0.30;
    std::vector<std::string> races = default_races();
    std::vector<std::string> genders = default_genders();
    std::vector<Occlusion> occlusions = {Occlusion::Glasses, Occlusion::Sunglasses, Occlusion::Mask};
    double split_fraction = 0.85;
    std::uint64_t master_seed = 0;

    double distance_min = 150.0;
    double distance_max = 400.0;
    double fov_degrees = 72.4;
    int inference_steps = 15;

    std::size_t total_images() const { return n_shapes * views_per_shape * images_per_view; }
    void validate() const;
};

struct ImageRecord {
    std::string image_id;
    std::string shape_id;
    std::size_t view_index = 0;
    std::size_t image_index = 0;
    std::string beta_ref;
    double camera_distance = 0.0;
    double camera_fov = 0.0;
    std::string depth_image_path;
    std::string prompt_positive;
    std::string prompt_negative;
    std::string race;
    std::string gender;
    Occlusion occlusion = Occlusion::None;
    std::uint32_t generation_seed = 0;
    int inference_steps = 15;
    std::size_t images_per_prompt = 5;
    Split split = Split::Train;
    std::string image_path;
    std::string embedding_path;
    Status status = Status::Planned;
    std::string error_note;

    bool operator==(const ImageRecord&) const = default;
};

using Manifest = std::vector<ImageRecord>;

std::string shape_id_for(std::size_t index);
std::string depth_path_for(std::string_view shape_id, std::size_t view);

/// One record per (shape, view, image). Categories are dealt round-robin over a seeded
/// permutation of the records, so every (race, gender) cell, every occlusion type and every
/// (race, gender) cell among occluded records is balanced to within one. The train/val split is
/// drawn over shapes.
Manifest plan_dataset(const DatasetPlan& plan);

struct Prompt {
    std::string positive;
    std::string negative;
};

/// Checks race and gender against the vocabularies given.
Prompt build_prompt(Occlusion occlusion, std::string_view race, std::string_view gender,
                    const std::vector<std::string>& races = default_races(),
                    const std::vector<std::string>& genders = default_genders());

struct BalanceCheck {
    std::string name;
    std::size_t max_deviation = 0;
    bool pass = true;
    std::vector<std::string> offending;
};

struct BalanceReport {
    std::size_t total = 0;
    std::map<std::pair<std::string, std::string>, std::size_t> cells;
    std::map<std::pair<std::string, std::string>, std::size_t> occluded_cells;
    std::map<Occlusion, std::size_t> occlusions;
    std::map<Split, std::size_t> split_images;
    std::map<Split, std::size_t> split_shapes;
    std::map<std::tuple<std::string, std::string, Occlusion, Split>, std::size_t> table;
    std::vector<BalanceCheck> checks;
    std::size_t max_deviation = 0;
    bool pass = true;

    std::string to_json() const;
    std::string table_csv() const;
};

/// Recounts the manifest against the plan's vocabularies and quotas.
BalanceReport balance_report(const Manifest& manifest, const DatasetPlan& plan);

/// Throws FormatError(Validation) on duplicate ids or a record whose status and paths disagree.
void validate_manifest(const Manifest& manifest);

std::string record_to_json_line(const ImageRecord& record);
ImageRecord record_from_json_line(std::string_view line);

Manifest load_manifest(const std::filesystem::path& path);
/// Atomic: writes a temporary file and renames it into place.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

std::string plan_to_json(const DatasetPlan& plan);
DatasetPlan plan_from_json(std::string_view text);

/// Exclusive advisory lock on `<manifest>.lock`, held for the object's lifetime.
class ManifestLock {
public:
    explicit ManifestLock(const std::filesystem::path& manifest_path);
    ~ManifestLock();
    ManifestLock(const ManifestLock&) = delete;
    ManifestLock& operator=(const ManifestLock&) = delete;

private:
    int fd_ = -1;
};

} // namespace faceforge
