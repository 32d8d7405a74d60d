#pragma once

#include <sstream>

#include "ddnd/control.hpp"
#include "ddnd/distill.hpp"

namespace ddnd {

// Flat text config: one `key = value` per line, '#' starts a comment. Every
// key has a default; unknown keys are an error so typos do not silently fall
// back to defaults.
struct RunConfig {
    NetworkConfig student = NetworkConfig::student();
    NetworkConfig teacher = NetworkConfig::teacher();
    SsdeParams ssde;
    DistillParams distill;
    ControlParams control;
    TrainOptions train;

    double fov_deg = 87.0;
    int width = 160;
    int height = 128;
    double speed = 0.5;
    double dt = 0.1;
    int max_ticks = 400;
    double collision_radius = 0.1;

    int data_count = 300;
    unsigned data_seed = 1;

    std::string data_dir = "data";
    std::string world_path = "";
    std::string weights_path = "";
    std::string teacher_path = "";
    std::string out_path = "out";

    double fov_rad() const { return fov_deg * M_PI / 180.0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double cfg_double(const std::string& key, const std::string& v) {
    size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        fail("config: key '" + key + "' expects a number, got '" + v + "'");
    }
    check(used == v.size(), "config: trailing junk in value of '" + key + "'");
    return out;
}

inline int cfg_int(const std::string& key, const std::string& v) {
    const double d = cfg_double(key, v);
    check(d == std::floor(d), "config: key '" + key + "' expects an integer, got '" + v + "'");
    return static_cast<int>(d);
}

inline bool cfg_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    fail("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<int> cfg_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(cfg_int(key, trim(item)));
    check(!out.empty(), "config: key '" + key + "' expects a comma list");
    return out;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace detail

inline void config_set(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    // clang-format off
    if      (key == "student.stage_channels")   c.student.stage_channels = cfg_int_list(key, value);
    else if (key == "student.decoder_channels") c.student.decoder_channels = cfg_int_list(key, value);
    else if (key == "student.blocks_per_stage") c.student.blocks_per_stage = cfg_int(key, value);
    else if (key == "student.dilation_rates")   c.student.dilation_rates = cfg_int_list(key, value);
    else if (key == "teacher.stage_channels")   c.teacher.stage_channels = cfg_int_list(key, value);
    else if (key == "teacher.decoder_channels") c.teacher.decoder_channels = cfg_int_list(key, value);
    else if (key == "teacher.blocks_per_stage") c.teacher.blocks_per_stage = cfg_int(key, value);
    else if (key == "teacher.dilation_rates")   c.teacher.dilation_rates = cfg_int_list(key, value);
    else if (key == "ssde.alpha_ssim")          c.ssde.alpha_ssim = cfg_double(key, value);
    else if (key == "ssde.lambda_smooth")       c.ssde.lambda_smooth = cfg_double(key, value);
    else if (key == "ssde.min_depth")           c.ssde.min_depth = cfg_double(key, value);
    else if (key == "ssde.max_depth")           c.ssde.max_depth = cfg_double(key, value);
    else if (key == "distill.alpha_kd")         c.distill.alpha_kd = cfg_double(key, value);
    else if (key == "distill.encoder_kd")       c.distill.encoder_mode = encoder_kd_from_string(value);
    else if (key == "distill.decoder_kd")       c.distill.decoder_mode = decoder_kd_from_string(value);
    else if (key == "distill.stages")           c.distill.stages = cfg_int_list(key, value);
    else if (key == "distill.ccm_prescale")     c.distill.ccm_prescale = cfg_bool(key, value);
    else if (key == "train.steps")              c.train.steps = cfg_int(key, value);
    else if (key == "train.batch")              c.train.batch = cfg_int(key, value);
    else if (key == "train.lr")                 c.train.lr = cfg_double(key, value);
    else if (key == "train.weight_decay")       c.train.weight_decay = cfg_double(key, value);
    else if (key == "train.seed")               c.train.seed = static_cast<unsigned>(cfg_int(key, value));
    else if (key == "train.cosine")             c.train.cosine = cfg_bool(key, value);
    else if (key == "control.lambda_avoid")     c.control.lambda_avoid = cfg_double(key, value);
    else if (key == "control.c_avoid")          c.control.c_avoid = cfg_double(key, value);
    else if (key == "control.sigma")            c.control.sigma = cfg_double(key, value);
    else if (key == "control.window")           c.control.window = cfg_int(key, value);
    else if (key == "control.center_rows")      c.control.center_rows = cfg_int(key, value);
    else if (key == "sim.fov_deg")              c.fov_deg = cfg_double(key, value);
    else if (key == "sim.width")                c.width = cfg_int(key, value);
    else if (key == "sim.height")               c.height = cfg_int(key, value);
    else if (key == "sim.speed")                c.speed = cfg_double(key, value);
    else if (key == "sim.dt")                   c.dt = cfg_double(key, value);
    else if (key == "sim.max_ticks")            c.max_ticks = cfg_int(key, value);
    else if (key == "sim.collision_radius")     c.collision_radius = cfg_double(key, value);
    else if (key == "data.count")               c.data_count = cfg_int(key, value);
    else if (key == "data.seed")                c.data_seed = static_cast<unsigned>(cfg_int(key, value));
    else if (key == "paths.data_dir")           c.data_dir = value;
    else if (key == "paths.world")              c.world_path = value;
    else if (key == "paths.weights")            c.weights_path = value;
    else if (key == "paths.teacher")            c.teacher_path = value;
    else if (key == "paths.out")                c.out_path = value;
    else fail("config: unknown key '" + key + "'");
    // clang-format on
}

inline RunConfig parse_config(std::istream& is, const std::string& origin = "<config>") {
    RunConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        check(eq != std::string::npos,
              "config: missing '=' at " + origin + ":" + std::to_string(lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        check(!key.empty(), "config: empty key at " + origin + ":" + std::to_string(lineno));
        config_set(c, key, value);
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "load_config: cannot open '" + path + "'");
    return parse_config(is, path);
}

// Full key listing with defaults; `ddnd gen-data --dump-config` style output
// and the README both come from here so the docs cannot drift.
inline std::string default_config_text() {
    const RunConfig c;
    std::ostringstream os;
    os << "# DDND run configuration. One key = value per line, '#' comments.\n"
       << "# Values below are the defaults.\n\n"
       << "# depth network (trained model)\n"
       << "student.stage_channels = " << detail::join_ints(c.student.stage_channels) << "\n"
       << "student.decoder_channels = " << detail::join_ints(c.student.decoder_channels) << "\n"
       << "student.blocks_per_stage = " << c.student.blocks_per_stage << "\n"
       << "student.dilation_rates = " << detail::join_ints(c.student.dilation_rates) << "\n\n"
       << "# teacher network for distillation\n"
       << "teacher.stage_channels = " << detail::join_ints(c.teacher.stage_channels) << "\n"
       << "teacher.decoder_channels = " << detail::join_ints(c.teacher.decoder_channels) << "\n"
       << "teacher.blocks_per_stage = " << c.teacher.blocks_per_stage << "\n"
       << "teacher.dilation_rates = " << detail::join_ints(c.teacher.dilation_rates) << "\n\n"
       << "# self-supervised loss\n"
       << "ssde.alpha_ssim = " << c.ssde.alpha_ssim << "\n"
       << "ssde.lambda_smooth = " << c.ssde.lambda_smooth << "\n"
       << "ssde.min_depth = " << c.ssde.min_depth << "\n"
       << "ssde.max_depth = " << c.ssde.max_depth << "\n\n"
       << "# distillation\n"
       << "distill.alpha_kd = " << c.distill.alpha_kd << "\n"
       << "distill.encoder_kd = cadit      # none | l2 | cd | cadit\n"
       << "distill.decoder_kd = l1         # none | l1 | cadit+l1\n"
       << "distill.stages = " << detail::join_ints(c.distill.stages) << "\n"
       << "distill.ccm_prescale = " << (c.distill.ccm_prescale ? "true" : "false") << "\n\n"
       << "# optimizer\n"
       << "train.steps = " << c.train.steps << "\n"
       << "train.batch = " << c.train.batch << "\n"
       << "train.lr = " << c.train.lr << "\n"
       << "train.weight_decay = " << c.train.weight_decay << "\n"
       << "train.seed = " << c.train.seed << "\n"
       << "train.cosine = " << (c.train.cosine ? "true" : "false") << "\n\n"
       << "# steering\n"
       << "control.lambda_avoid = " << c.control.lambda_avoid << "\n"
       << "control.c_avoid = " << c.control.c_avoid << "\n"
       << "control.sigma = " << c.control.sigma << "   # 0 = use the camera FOV\n"
       << "control.window = " << c.control.window << "\n"
       << "control.center_rows = " << c.control.center_rows << "\n\n"
       << "# simulator and camera\n"
       << "sim.fov_deg = " << c.fov_deg << "\n"
       << "sim.width = " << c.width << "\n"
       << "sim.height = " << c.height << "\n"
       << "sim.speed = " << c.speed << "\n"
       << "sim.dt = " << c.dt << "\n"
       << "sim.max_ticks = " << c.max_ticks << "\n"
       << "sim.collision_radius = " << c.collision_radius << "\n\n"
       << "# dataset generation\n"
       << "data.count = " << c.data_count << "\n"
       << "data.seed = " << c.data_seed << "\n\n"
       << "# paths (usually overridden on the command line)\n"
       << "paths.data_dir = " << c.data_dir << "\n"
       << "paths.world = " << c.world_path << "\n"
       << "paths.weights = " << c.weights_path << "\n"
       << "paths.teacher = " << c.teacher_path << "\n"
       << "paths.out = " << c.out_path << "\n";
    return os.str();
}

}  // namespace ddnd
