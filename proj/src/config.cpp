#include "semformer/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace semformer {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void TrainConfig::apply(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "stage") {
        if (v != "caae" && v != "seg") {
            throw std::invalid_argument("config: stage must be 'caae' or 'seg'");
        }
        stage = v;
    } else if (key == "epochs") epochs = parse_int(key, v);
    else if (key == "batch_size") batch_size = parse_int(key, v);
    else if (key == "base_lr") base_lr = parse_double(key, v);
    else if (key == "poly_power") poly_power = parse_double(key, v);
    else if (key == "momentum") momentum = parse_double(key, v);
    else if (key == "weight_decay") weight_decay = parse_double(key, v);
    else if (key == "grad_clip") grad_clip = parse_double(key, v);
    else if (key == "crop_size") crop_size = parse_int(key, v);
    else if (key == "scale_min") scale_min = parse_double(key, v);
    else if (key == "scale_max") scale_max = parse_double(key, v);
    else if (key == "flip_prob") flip_prob = parse_double(key, v);
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "sigma") sigma = parse_double(key, v);
    else if (key == "cra_blocks") cra_blocks = parse_int(key, v);
    else if (key == "token_merge") {
        if (v != "sum" && v != "mean" && v != "max") {
            throw std::invalid_argument("config: token_merge must be sum|mean|max");
        }
        token_merge = v;
    } else if (key == "class_dim") class_dim = parse_int(key, v);
    else if (key == "loss_cf") loss_cf = parse_bool(key, v);
    else if (key == "loss_cb") loss_cb = parse_bool(key, v);
    else if (key == "loss_as") loss_as = parse_bool(key, v);
    else if (key == "loss_ac") loss_ac = parse_bool(key, v);
    else if (key == "loss_ss") loss_ss = parse_bool(key, v);
    else if (key == "pair_averaged_cross") pair_averaged_cross = parse_bool(key, v);
    else if (key == "patch_size") patch_size = parse_int(key, v);
    else if (key == "enc_dim") enc_dim = parse_int(key, v);
    else if (key == "enc_depth") enc_depth = parse_int(key, v);
    else if (key == "enc_heads") enc_heads = parse_int(key, v);
    else if (key == "dec_depth") dec_depth = parse_int(key, v);
    else if (key == "seg_dim") seg_dim = parse_int(key, v);
    else if (key == "seg_depth") seg_depth = parse_int(key, v);
    else if (key == "seg_heads") seg_heads = parse_int(key, v);
    else if (key == "mlp_ratio") mlp_ratio = parse_int(key, v);
    else if (key == "num_images") num_images = parse_int(key, v);
    else if (key == "eval_images") eval_images = parse_int(key, v);
    else if (key == "image_size") image_size = parse_int(key, v);
    else if (key == "num_classes") num_classes = parse_int(key, v);
    else if (key == "shapes_min") shapes_min = parse_int(key, v);
    else if (key == "shapes_max") shapes_max = parse_int(key, v);
    else if (key == "tau_bg") tau_bg = parse_double(key, v);
    else if (key == "use_cra") use_cra = parse_bool(key, v);
    else if (key == "data_dir") data_dir = v;
    else if (key == "caae_checkpoint") caae_checkpoint = v;
    else if (key == "seg_checkpoint") seg_checkpoint = v;
    else if (key == "resume") resume = v;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void TrainConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        }
        apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    std::map<std::string, std::string> m;
    m["stage"] = stage;
    m["epochs"] = std::to_string(epochs);
    m["batch_size"] = std::to_string(batch_size);
    m["base_lr"] = fmt(base_lr);
    m["poly_power"] = fmt(poly_power);
    m["momentum"] = fmt(momentum);
    m["weight_decay"] = fmt(weight_decay);
    m["grad_clip"] = fmt(grad_clip);
    m["crop_size"] = std::to_string(crop_size);
    m["scale_min"] = fmt(scale_min);
    m["scale_max"] = fmt(scale_max);
    m["flip_prob"] = fmt(flip_prob);
    m["seed"] = std::to_string(seed);
    m["sigma"] = fmt(sigma);
    m["cra_blocks"] = std::to_string(cra_blocks);
    m["token_merge"] = token_merge;
    m["class_dim"] = std::to_string(class_dim);
    m["loss_cf"] = loss_cf ? "1" : "0";
    m["loss_cb"] = loss_cb ? "1" : "0";
    m["loss_as"] = loss_as ? "1" : "0";
    m["loss_ac"] = loss_ac ? "1" : "0";
    m["loss_ss"] = loss_ss ? "1" : "0";
    m["pair_averaged_cross"] = pair_averaged_cross ? "1" : "0";
    m["patch_size"] = std::to_string(patch_size);
    m["enc_dim"] = std::to_string(enc_dim);
    m["enc_depth"] = std::to_string(enc_depth);
    m["enc_heads"] = std::to_string(enc_heads);
    m["dec_depth"] = std::to_string(dec_depth);
    m["seg_dim"] = std::to_string(seg_dim);
    m["seg_depth"] = std::to_string(seg_depth);
    m["seg_heads"] = std::to_string(seg_heads);
    m["mlp_ratio"] = std::to_string(mlp_ratio);
    m["num_images"] = std::to_string(num_images);
    m["eval_images"] = std::to_string(eval_images);
    m["image_size"] = std::to_string(image_size);
    m["num_classes"] = std::to_string(num_classes);
    m["shapes_min"] = std::to_string(shapes_min);
    m["shapes_max"] = std::to_string(shapes_max);
    m["tau_bg"] = fmt(tau_bg);
    m["use_cra"] = use_cra ? "1" : "0";
    m["data_dir"] = data_dir;
    m["caae_checkpoint"] = caae_checkpoint;
    m["seg_checkpoint"] = seg_checkpoint;
    m["resume"] = resume;
    return m;
}

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw std::invalid_argument("config: base_lr must be > 0");
    if (poly_power <= 0.0) throw std::invalid_argument("config: poly_power must be > 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (crop_size < patch_size || crop_size % patch_size != 0) {
        throw std::invalid_argument("config: crop_size must be a positive multiple of patch_size");
    }
    if (scale_min <= 0.0 || scale_max < scale_min) {
        throw std::invalid_argument("config: invalid scale range");
    }
    if (sigma <= 0.0) throw std::invalid_argument("config: sigma must be > 0");
    if (cra_blocks < 1 || cra_blocks > seg_depth) {
        throw std::invalid_argument("config: cra_blocks must be in [1, seg_depth]");
    }
    if (tau_bg < 0.0 || tau_bg > 1.0) throw std::invalid_argument("config: tau_bg in [0,1]");
}

std::pair<std::string, std::string> parse_key_value(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("expected key=value, got '" + s + "'");
    }
    return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

}  // namespace semformer
