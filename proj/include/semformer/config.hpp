#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace semformer {

// Every knob of the pipeline, parsed from flat `key = value` files
// (# comments) plus repeatable `--set key=value` overrides. Unknown keys
// are rejected.
struct TrainConfig {
    // stage & schedule
    std::string stage = "caae";  // {caae, seg}
    std::int64_t epochs = 18;
    std::int64_t batch_size = 16;
    double base_lr = 0.025;
    double poly_power = 0.9;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double grad_clip = 5.0;  // global norm; 0 disables

    // data & augmentation
    std::int64_t crop_size = 64;
    double scale_min = 0.5;
    double scale_max = 2.0;
    double flip_prob = 0.5;
    std::uint64_t seed = 0;

    // losses / paper knobs
    double sigma = 0.075;           // AS scale
    std::int64_t cra_blocks = 4;    // U
    std::string token_merge = "sum";
    std::int64_t class_dim = 16;    // D
    bool loss_cf = true;
    bool loss_cb = true;
    bool loss_as = true;
    bool loss_ac = true;
    bool loss_ss = true;            // SS' (class-token similarity)
    bool pair_averaged_cross = false;

    // backbones
    std::int64_t patch_size = 8;
    std::int64_t enc_dim = 64;
    std::int64_t enc_depth = 4;
    std::int64_t enc_heads = 4;
    std::int64_t dec_depth = 2;
    std::int64_t seg_dim = 64;
    std::int64_t seg_depth = 4;
    std::int64_t seg_heads = 4;
    std::int64_t mlp_ratio = 4;

    // synthetic dataset
    std::int64_t num_images = 200;
    std::int64_t eval_images = 50;
    std::int64_t image_size = 64;
    std::int64_t num_classes = 3;
    std::int64_t shapes_min = 1;
    std::int64_t shapes_max = 3;

    // evaluation / inference
    double tau_bg = 0.25;
    bool use_cra = true;

    // paths
    std::string data_dir;
    std::string caae_checkpoint;
    std::string seg_checkpoint;
    std::string resume;

    // Applies one key=value pair; throws std::invalid_argument on unknown
    // keys or unparsable values.
    void apply(const std::string& key, const std::string& value);

    // Reads a flat config file. Missing file -> error naming the path.
    void load_file(const std::string& path);

    std::map<std::string, std::string> to_map() const;
    void validate() const;
};

// Splits "key=value". Throws on malformed input.
std::pair<std::string, std::string> parse_key_value(const std::string& s);

}  // namespace semformer
