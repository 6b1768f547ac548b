#include "doctest.h"

#include "needleforge/config_file.hpp"
#include "needleforge/errors.hpp"

#include <string>

using namespace needleforge;

namespace {

bool message_contains(const std::exception& e, const std::string& needle) {
    return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("serialization round-trips the default configuration exactly") {
    const CliConfig def = default_cli_config();
    const std::string text = serialize_config(def);
    const CliConfig back = parse_config_text(text, "round-trip");
    CHECK(serialize_config(back) == text);
    CHECK(config_hash_hex(back) == config_hash_hex(def));
}

TEST_CASE("serialization round-trips a heavily customized configuration") {
    CliConfig cfg = default_cli_config();
    cfg.scene.foam.size = Vec3(0.040, 0.042, 0.061);
    cfg.scene.foam.resolution = Eigen::Vector3i(4, 5, 6);
    cfg.scene.material.young_modulus = 2750.5;
    cfg.scene.needle.length = 0.1234;
    cfg.scene.sim.dt = 0.0025;
    cfg.scene.sim.speed_headroom = 2.5;
    cfg.scene.sim.gravity = Vec3(0.1, -0.2, 9.81);
    cfg.scene.coupling.spacing = 0.0017;
    cfg.scene.entry_point = Vec3(0.020, 0.021, 0.0);
    cfg.scene.seed = 1234567;
    cfg.gains.alpha = 0.017;
    cfg.gains.jacobian_reuse = 3;
    cfg.train.hidden_count = 40;
    cfg.train.lambda = 1e-4;
    cfg.data.grid.grid_x = 5;
    cfg.data.grid.depth = 0.05;
    cfg.data.budget = 1234;
    cfg.data.split_ratio = 0.8;

    const std::string text = serialize_config(cfg);
    const CliConfig back = parse_config_text(text, "custom");
    CHECK(serialize_config(back) == text);
    CHECK(back.scene.foam.resolution == cfg.scene.foam.resolution);
    CHECK(back.scene.sim.dt == cfg.scene.sim.dt);
    CHECK(back.scene.seed == cfg.scene.seed);
    CHECK(back.data.budget == cfg.data.budget);
    CHECK(back.gains.jacobian_reuse == cfg.gains.jacobian_reuse);
}

TEST_CASE("keys carry their units and are converted to SI") {
    const CliConfig cfg = parse_config_text(
        "sim.dt_ms = 5\n"
        "sim.speed_mm_s = 7.5\n"
        "needle.length_mm = 120\n"
        "needle.radius_mm = 0.6\n"
        "coupling.spacing_mm = 1.5\n"
        "data.depth_mm = 90\n"
        "data.noise_mm = 0.3\n"
        "controller.fd_step_mm = 0.2\n"
        "foam.size_mm = 80 90 120\n",
        "units");
    CHECK(cfg.scene.sim.dt == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(cfg.scene.sim.insertion_speed == doctest::Approx(0.0075).epsilon(1e-15));
    CHECK(cfg.scene.needle.length == doctest::Approx(0.120).epsilon(1e-15));
    CHECK(cfg.scene.needle.radius == doctest::Approx(0.0006).epsilon(1e-15));
    CHECK(cfg.scene.coupling.spacing == doctest::Approx(0.0015).epsilon(1e-15));
    CHECK(cfg.data.grid.depth == doctest::Approx(0.090).epsilon(1e-15));
    CHECK(cfg.data.target_noise == doctest::Approx(0.0003).epsilon(1e-15));
    CHECK(cfg.gains.fd_step == doctest::Approx(0.0002).epsilon(1e-15));
    CHECK(cfg.scene.foam.size == Vec3(0.080, 0.090, 0.120));
}

TEST_CASE("comments, blank lines, and whitespace are tolerated") {
    const CliConfig cfg = parse_config_text(
        "# a comment line\n"
        "\n"
        "  seed   =   99   # trailing comment\n"
        "\t\n"
        "train.hidden = 30\n",
        "ws");
    CHECK(cfg.scene.seed == 99);
    CHECK(cfg.train.hidden_count == 30);
}

TEST_CASE("unknown keys are reported with origin and line number") {
    try {
        parse_config_text("seed = 1\nnot.a.key = 2\n", "myfile.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(message_contains(e, "myfile.cfg:2"));
        CHECK(message_contains(e, "not.a.key"));
    }
}

TEST_CASE("wrong arity and malformed values are reported with the key") {
    try {
        parse_config_text("foam.size_mm = 100 100\n", "f.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(message_contains(e, "f.cfg:1"));
        CHECK(message_contains(e, "foam.size_mm"));
    }

    try {
        parse_config_text("sim.dt_ms = fast\n", "g.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(message_contains(e, "g.cfg:1"));
        CHECK(message_contains(e, "sim.dt_ms"));
    }

    try {
        parse_config_text("needle.elements = 2.5\n", "h.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(message_contains(e, "h.cfg:1"));
        CHECK(message_contains(e, "integer"));
    }

    CHECK_THROWS_AS(parse_config_text("seed 42\n", "i.cfg"), ConfigError);
}

TEST_CASE("semantic validation still applies to parsed values") {
    CHECK_THROWS_AS(parse_config_text("sim.dt_ms = -10\n", "v.cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("material.poisson = 0.5\n", "v.cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("train.hidden = 0\n", "v.cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("data.split = 1.5\n", "v.cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("sim.speed_headroom = 0.5\n", "v.cfg"), ConfigError);
}

TEST_CASE("the config hash is stable and sensitive") {
    const CliConfig def = default_cli_config();
    const std::string h = config_hash_hex(def);
    CHECK(h.size() == 16);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config_hash_hex(default_cli_config()) == h);

    CliConfig tweaked = default_cli_config();
    tweaked.scene.sim.dt = 0.011;
    CHECK(config_hash_hex(tweaked) != h);

    tweaked = default_cli_config();
    tweaked.scene.seed += 1;
    CHECK(config_hash_hex(tweaked) != h);

    tweaked = default_cli_config();
    tweaked.data.budget += 1;
    CHECK(config_hash_hex(tweaked) != h);
}

TEST_CASE("later lines override earlier ones") {
    const CliConfig cfg = parse_config_text("seed = 1\nseed = 2\n", "dup");
    CHECK(cfg.scene.seed == 2);
}
