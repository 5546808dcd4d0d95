#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "voxseg/geometry.hpp"

namespace voxseg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. Unknown keys are rejected so typos fail
// loudly; every run echoes the resolved config into its output directory.
struct RunConfig {
    // dataset
    int image_width = 160;
    int image_height = 120;
    double room_width = 4.0;
    double room_height = 2.5;
    double room_depth = 4.0;
    int n_chairs = 2;
    int n_tables = 1;
    int n_frames = 30;
    double orbit_radius = 1.4;
    double orbit_height = 0.4; // above room centroid
    std::uint64_t seed = 0;
    // reconstruction
    int grid_resolution = 128;
    double grid_margin = 0.5;
    double frame_weight = 1.0;
    // network
    int net_layers = 4;
    int net_hidden = 32;
    int net_kernel = 7;
    double learning_rate = 0.05;
    int epochs = 60;
    int batch_pixels = 4096;
    // run
    std::string pose_source = "gt"; // gt | icp

    void validate() const {
        if (image_width <= 0 || image_height <= 0) throw ConfigError("image size must be positive");
        if (n_frames < 0) throw ConfigError("n_frames must be non-negative");
        if (pose_source != "gt" && pose_source != "icp")
            throw ConfigError("pose_source must be 'gt' or 'icp'");
        if (net_layers <= 0 || net_hidden <= 0 || net_kernel <= 0 || net_kernel % 2 == 0)
            throw ConfigError("network config invalid (kernel must be odd)");
    }
};

namespace detail {

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
    std::istringstream ss(text);
    ss >> out;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ConfigError("config: bad value for " + key + ": '" + text + "'");
}

inline void parse_value(const std::string&, const std::string& text, std::string& out) {
    out = text;
}

} // namespace detail

inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        using detail::parse_value;
        if (key == "image_width") parse_value(key, value, cfg.image_width);
        else if (key == "image_height") parse_value(key, value, cfg.image_height);
        else if (key == "room_width") parse_value(key, value, cfg.room_width);
        else if (key == "room_height") parse_value(key, value, cfg.room_height);
        else if (key == "room_depth") parse_value(key, value, cfg.room_depth);
        else if (key == "n_chairs") parse_value(key, value, cfg.n_chairs);
        else if (key == "n_tables") parse_value(key, value, cfg.n_tables);
        else if (key == "n_frames") parse_value(key, value, cfg.n_frames);
        else if (key == "orbit_radius") parse_value(key, value, cfg.orbit_radius);
        else if (key == "orbit_height") parse_value(key, value, cfg.orbit_height);
        else if (key == "seed") parse_value(key, value, cfg.seed);
        else if (key == "grid_resolution") parse_value(key, value, cfg.grid_resolution);
        else if (key == "grid_margin") parse_value(key, value, cfg.grid_margin);
        else if (key == "frame_weight") parse_value(key, value, cfg.frame_weight);
        else if (key == "net_layers") parse_value(key, value, cfg.net_layers);
        else if (key == "net_hidden") parse_value(key, value, cfg.net_hidden);
        else if (key == "net_kernel") parse_value(key, value, cfg.net_kernel);
        else if (key == "learning_rate") parse_value(key, value, cfg.learning_rate);
        else if (key == "epochs") parse_value(key, value, cfg.epochs);
        else if (key == "batch_pixels") parse_value(key, value, cfg.batch_pixels);
        else if (key == "pose_source") parse_value(key, value, cfg.pose_source);
        else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                               key + "'");
    }
    cfg.validate();
    return cfg;
}

inline void write_config(const RunConfig& cfg, std::ostream& out) {
    char buf[64];
    auto num = [&buf](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };
    out << "image_width = " << cfg.image_width << "\n";
    out << "image_height = " << cfg.image_height << "\n";
    out << "room_width = " << num(cfg.room_width) << "\n";
    out << "room_height = " << num(cfg.room_height) << "\n";
    out << "room_depth = " << num(cfg.room_depth) << "\n";
    out << "n_chairs = " << cfg.n_chairs << "\n";
    out << "n_tables = " << cfg.n_tables << "\n";
    out << "n_frames = " << cfg.n_frames << "\n";
    out << "orbit_radius = " << num(cfg.orbit_radius) << "\n";
    out << "orbit_height = " << num(cfg.orbit_height) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "grid_resolution = " << cfg.grid_resolution << "\n";
    out << "grid_margin = " << num(cfg.grid_margin) << "\n";
    out << "frame_weight = " << num(cfg.frame_weight) << "\n";
    out << "net_layers = " << cfg.net_layers << "\n";
    out << "net_hidden = " << cfg.net_hidden << "\n";
    out << "net_kernel = " << cfg.net_kernel << "\n";
    out << "learning_rate = " << num(cfg.learning_rate) << "\n";
    out << "epochs = " << cfg.epochs << "\n";
    out << "batch_pixels = " << cfg.batch_pixels << "\n";
    out << "pose_source = " << cfg.pose_source << "\n";
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse_config(f);
}

} // namespace voxseg
