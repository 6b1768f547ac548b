#pragma once

#include "needleforge/errors.hpp"

#include <utility>

namespace needleforge {

struct MaterialParams {
    double young_modulus = 3000.0;   // Pa
    double poisson_ratio = 0.45;
    double density = 1000.0;         // kg/m^3
    double rayleigh_mass = 0.1;      // 1/s
    double rayleigh_stiffness = 0.01;  // s
};

struct BeamParams {
    double young_modulus = 200e9;        // Pa
    double shear_modulus = 200e9 / 2.6;  // Pa, steel-like E/(2(1+nu)) at nu = 0.3
    double radius = 0.5e-3;              // m
    double length = 0.150;               // m
    int n_elements = 30;
    double shear_correction = 0.9;       // kappa, circular section
};

inline void validate(const MaterialParams& m) {
    if (m.young_modulus <= 0.0) throw ConfigError("material young_modulus must be > 0");
    if (m.poisson_ratio < 0.0 || m.poisson_ratio >= 0.5)
        throw ConfigError("material poisson_ratio must lie in [0, 0.5)");
    if (m.density <= 0.0) throw ConfigError("material density must be > 0");
    if (m.rayleigh_mass < 0.0 || m.rayleigh_stiffness < 0.0)
        throw ConfigError("material damping coefficients must be >= 0");
}

inline void validate(const BeamParams& p) {
    if (p.young_modulus <= 0.0 || p.shear_modulus <= 0.0 || p.radius <= 0.0 ||
        p.length <= 0.0 || p.shear_correction <= 0.0)
        throw ConfigError("needle parameters must be positive");
    if (p.n_elements < 2) throw ConfigError("needle must have at least 2 elements");
}

/// (lambda, mu) of isotropic linear elasticity.
inline std::pair<double, double> lame_parameters(const MaterialParams& m) {
    validate(m);
    const double e = m.young_modulus, nu = m.poisson_ratio;
    const double lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double mu = e / (2.0 * (1.0 + nu));
    return {lambda, mu};
}

}  // namespace needleforge
