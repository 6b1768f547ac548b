#include "needleforge/config_file.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "needleforge/io_util.hpp"
#include "needleforge/rng.hpp"

namespace needleforge {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& token, const std::string& key, long line,
                 const std::string& origin) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(v))
        throw ConfigError(origin + ":" + std::to_string(line) + ": key '" + key +
                          "' has non-numeric value '" + token + "'");
    return v;
}

long to_integer(double v, const std::string& key, long line, const std::string& origin) {
    if (v != std::floor(v) || std::abs(v) > 1e15)
        throw ConfigError(origin + ":" + std::to_string(line) + ": key '" + key +
                          "' must be an integer");
    return static_cast<long>(v);
}

struct KeyBinding {
    int arity;
    std::function<void(CliConfig&, const std::vector<double>&)> set;
    std::function<std::string(const CliConfig&)> get;
};

std::string join(std::initializer_list<double> values) {
    std::string out;
    for (double v : values) {
        if (!out.empty()) out += ' ';
        out += format_double(v);
    }
    return out;
}

std::string join_int(std::initializer_list<long> values) {
    std::string out;
    for (long v : values) {
        if (!out.empty()) out += ' ';
        out += std::to_string(v);
    }
    return out;
}

constexpr double kMm = 1e-3;  // file value in mm -> metres
constexpr double kMs = 1e-3;  // file value in ms -> seconds

/// Canonical key order; parse accepts any order.
const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
    static const std::vector<std::pair<std::string, KeyBinding>> table = {
        {"foam.size_mm",
         {3,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.foam.size = Vec3(v[0] * kMm, v[1] * kMm, v[2] * kMm);
          },
          [](const CliConfig& c) {
              return join({c.scene.foam.size.x() / kMm, c.scene.foam.size.y() / kMm,
                           c.scene.foam.size.z() / kMm});
          }}},
        {"foam.resolution",
         {3,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.foam.resolution =
                  Eigen::Vector3i(static_cast<int>(v[0]), static_cast<int>(v[1]),
                                  static_cast<int>(v[2]));
          },
          [](const CliConfig& c) {
              return join_int({c.scene.foam.resolution.x(), c.scene.foam.resolution.y(),
                               c.scene.foam.resolution.z()});
          }}},
        {"material.young_pa",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.scene.material.young_modulus = v[0]; },
          [](const CliConfig& c) { return join({c.scene.material.young_modulus}); }}},
        {"material.poisson",
         {1,
          [](CliConfig& c, const std::vector<double>& v) { c.scene.material.poisson_ratio = v[0]; },
          [](const CliConfig& c) { return join({c.scene.material.poisson_ratio}); }}},
        {"material.density_kg_m3",
         {1,
          [](CliConfig& c, const std::vector<double>& v) { c.scene.material.density = v[0]; },
          [](const CliConfig& c) { return join({c.scene.material.density}); }}},
        {"material.rayleigh_mass",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.material.rayleigh_mass = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.material.rayleigh_mass}); }}},
        {"material.rayleigh_stiffness",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.material.rayleigh_stiffness = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.material.rayleigh_stiffness}); }}},
        {"needle.young_pa",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.scene.needle.young_modulus = v[0]; },
          [](const CliConfig& c) { return join({c.scene.needle.young_modulus}); }}},
        {"needle.shear_pa",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.scene.needle.shear_modulus = v[0]; },
          [](const CliConfig& c) { return join({c.scene.needle.shear_modulus}); }}},
        {"needle.radius_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.needle.radius = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.scene.needle.radius / kMm}); }}},
        {"needle.length_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.needle.length = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.scene.needle.length / kMm}); }}},
        {"needle.elements",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.needle.n_elements = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.scene.needle.n_elements}); }}},
        {"needle.kappa",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.scene.needle.shear_correction = v[0]; },
          [](const CliConfig& c) { return join({c.scene.needle.shear_correction}); }}},
        {"sim.dt_ms",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.scene.sim.dt = v[0] * kMs; },
          [](const CliConfig& c) { return join({c.scene.sim.dt / kMs}); }}},
        {"sim.speed_mm_s",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.sim.insertion_speed = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.scene.sim.insertion_speed / kMm}); }}},
        {"sim.speed_headroom",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.sim.speed_headroom = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.sim.speed_headroom}); }}},
        {"sim.gravity_m_s2",
         {3,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.sim.gravity = Vec3(v[0], v[1], v[2]);
          },
          [](const CliConfig& c) {
              return join({c.scene.sim.gravity.x(), c.scene.sim.gravity.y(),
                           c.scene.sim.gravity.z()});
          }}},
        {"sim.refresh_angle_rad",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.sim.tangent_refresh_angle = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.sim.tangent_refresh_angle}); }}},
        {"sim.settle_steps",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.sim.settle_steps = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.scene.sim.settle_steps}); }}},
        {"coupling.spacing_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.coupling.spacing = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.scene.coupling.spacing / kMm}); }}},
        {"coupling.position_tol_m",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.coupling.position_tol = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.coupling.position_tol}); }}},
        {"coupling.baumgarte",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.coupling.baumgarte = v[0];
          },
          [](const CliConfig& c) { return join({c.scene.coupling.baumgarte}); }}},
        {"controller.weight_tip",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.gains.weight_tip = v[0]; },
          [](const CliConfig& c) { return join({c.gains.weight_tip}); }}},
        {"controller.weight_entry",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.gains.weight_entry = v[0]; },
          [](const CliConfig& c) { return join({c.gains.weight_entry}); }}},
        {"controller.alpha",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.gains.alpha = v[0]; },
          [](const CliConfig& c) { return join({c.gains.alpha}); }}},
        {"controller.fd_step_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) { c.gains.fd_step = v[0] * kMm; },
          [](const CliConfig& c) { return join({c.gains.fd_step / kMm}); }}},
        {"controller.jacobian_reuse",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.gains.jacobian_reuse = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.gains.jacobian_reuse}); }}},
        {"train.hidden",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.train.hidden_count = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.train.hidden_count}); }}},
        {"train.lambda",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.train.lambda = v[0]; },
          [](const CliConfig& c) { return join({c.train.lambda}); }}},
        {"data.grid_x",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.grid.grid_x = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.data.grid.grid_x}); }}},
        {"data.grid_y",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.grid.grid_y = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.data.grid.grid_y}); }}},
        {"data.extent_x_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.grid.extent_x = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.data.grid.extent_x / kMm}); }}},
        {"data.extent_y_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.grid.extent_y = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.data.grid.extent_y / kMm}); }}},
        {"data.depth_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) { c.data.grid.depth = v[0] * kMm; },
          [](const CliConfig& c) { return join({c.data.grid.depth / kMm}); }}},
        {"data.noise_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.target_noise = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.data.target_noise / kMm}); }}},
        {"data.curved_count",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.curved.count = static_cast<int>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.data.curved.count}); }}},
        {"data.curved_amplitude_mm",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.curved.amplitude = v[0] * kMm;
          },
          [](const CliConfig& c) { return join({c.data.curved.amplitude / kMm}); }}},
        {"data.budget",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.data.budget = static_cast<long>(v[0]);
          },
          [](const CliConfig& c) { return join_int({c.data.budget}); }}},
        {"data.split",
         {1, [](CliConfig& c, const std::vector<double>& v) { c.data.split_ratio = v[0]; },
          [](const CliConfig& c) { return join({c.data.split_ratio}); }}},
        {"seed",
         {1,
          [](CliConfig& c, const std::vector<double>& v) {
              c.scene.seed = static_cast<std::uint64_t>(v[0]);
              c.train.seed = c.scene.seed;
          },
          [](const CliConfig& c) {
              return std::to_string(c.scene.seed);
          }}},
    };
    return table;
}

const std::vector<std::string> kIntegerKeys = {
    "foam.resolution", "needle.elements",  "sim.settle_steps",   "controller.jacobian_reuse",
    "train.hidden",    "data.grid_x",      "data.grid_y",        "data.curved_count",
    "data.budget",     "seed"};

bool is_integer_key(const std::string& key) {
    for (const std::string& k : kIntegerKeys)
        if (k == key) return true;
    return false;
}

void finalize(CliConfig& cfg) {
    cfg.scene.entry_point =
        Vec3(0.5 * cfg.scene.foam.size.x(), 0.5 * cfg.scene.foam.size.y(), 0.0);
    cfg.scene.insertion_axis = Vec3::UnitZ();
    validate(cfg.scene);
    validate(cfg.gains);
    validate(cfg.data);
    if (cfg.train.hidden_count < 1) throw ConfigError("train.hidden must be >= 1");
    if (cfg.train.lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
}

}  // namespace

CliConfig default_cli_config() {
    CliConfig cfg;
    finalize(cfg);
    return cfg;
}

CliConfig parse_config_text(const std::string& text, const std::string& origin) {
    CliConfig cfg;
    std::istringstream in(text);
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash_pos = raw.find('#');
        const std::string line = trim(hash_pos == std::string::npos
                                          ? raw
                                          : raw.substr(0, hash_pos));
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");

        if (key == "seed") {
            char* end = nullptr;
            const unsigned long long seed = std::strtoull(value.c_str(), &end, 10);
            if (end != value.c_str() + value.size())
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": key 'seed' must be a non-negative integer");
            cfg.scene.seed = seed;
            cfg.train.seed = seed;
            continue;
        }
        const KeyBinding* binding = nullptr;
        for (const auto& [name, b] : key_table()) {
            if (name == key) {
                binding = &b;
                break;
            }
        }
        if (!binding)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": unknown config key '" + key + "'");

        std::vector<double> values;
        std::istringstream vs(value);
        std::string token;
        while (vs >> token) values.push_back(to_double(token, key, line_no, origin));
        if (static_cast<int>(values.size()) != binding->arity)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + key +
                              "' expects " + std::to_string(binding->arity) +
                              " value(s), got " + std::to_string(values.size()));
        if (is_integer_key(key))
            for (double v : values) to_integer(v, key, line_no, origin);
        binding->set(cfg, values);
    }
    finalize(cfg);
    return cfg;
}

CliConfig parse_config_file(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse_config_text(text, path);
}

std::string serialize_config(const CliConfig& cfg) {
    std::string out;
    for (const auto& [name, binding] : key_table()) {
        out += name;
        out += " = ";
        out += binding.get(cfg);
        out += '\n';
    }
    return out;
}

std::string config_hash_hex(const CliConfig& cfg) {
    const std::string canonical = serialize_config(cfg);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical)));
    return buf;
}

}  // namespace needleforge
