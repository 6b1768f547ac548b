#include "needleforge/fem_tissue.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace needleforge {
namespace {

constexpr double kVolumeEpsilon = 1e-18;  // m^3

Eigen::Matrix<double, 6, 6> elasticity_matrix(const MaterialParams& m) {
    const auto [lambda, mu] = lame_parameters(m);
    Eigen::Matrix<double, 6, 6> d = Eigen::Matrix<double, 6, 6>::Zero();
    d.topLeftCorner<3, 3>().setConstant(lambda);
    d.diagonal().head<3>().array() += 2.0 * mu;
    d.diagonal().tail<3>().setConstant(mu);
    return d;
}

Eigen::Matrix<double, 6, 12> strain_displacement(const Eigen::Matrix<double, 4, 3>& grads) {
    Eigen::Matrix<double, 6, 12> b = Eigen::Matrix<double, 6, 12>::Zero();
    for (int a = 0; a < 4; ++a) {
        const double gx = grads(a, 0), gy = grads(a, 1), gz = grads(a, 2);
        const int c = 3 * a;
        b(0, c + 0) = gx;
        b(1, c + 1) = gy;
        b(2, c + 2) = gz;
        b(3, c + 0) = gy;
        b(3, c + 1) = gx;
        b(4, c + 1) = gz;
        b(4, c + 2) = gy;
        b(5, c + 0) = gz;
        b(5, c + 2) = gx;
    }
    return b;
}

}  // namespace

Mat12 tet_rest_stiffness(const std::array<Vec3, 4>& v, const MaterialParams& m) {
    const double volume = signed_volume(v[0], v[1], v[2], v[3]);
    if (volume <= kVolumeEpsilon) throw MeshError("degenerate tetrahedron in stiffness assembly");

    Mat3 dm;
    dm.col(0) = v[1] - v[0];
    dm.col(1) = v[2] - v[0];
    dm.col(2) = v[3] - v[0];
    const Mat3 dm_inv = dm.inverse();

    // Rows of dm_inv are the gradients of shape functions 1..3; gradient 0
    // balances them to zero sum.
    Eigen::Matrix<double, 4, 3> grads;
    grads.bottomRows<3>() = dm_inv;
    grads.row(0) = -dm_inv.colwise().sum();

    const auto b = strain_displacement(grads);
    return volume * b.transpose() * elasticity_matrix(m) * b;
}

TissueModel build_tissue_model(TetMesh mesh, const MaterialParams& material) {
    validate(material);
    TissueModel model;
    model.mesh = std::move(mesh);
    model.material = material;

    const int n_tets = model.mesh.tet_count();
    model.element_stiffness.resize(n_tets);
    model.rest_shape_inv.resize(n_tets);
    model.node_mass = VecX::Zero(model.mesh.node_count());

    for (int t = 0; t < n_tets; ++t) {
        const auto tet = model.mesh.tets.row(t);
        std::array<Vec3, 4> v;
        for (int a = 0; a < 4; ++a) v[a] = model.mesh.nodes.row(tet[a]);
        const double volume = signed_volume(v[0], v[1], v[2], v[3]);
        if (volume <= kVolumeEpsilon) throw MeshError("degenerate tetrahedron in mesh");
        model.element_stiffness[t] = tet_rest_stiffness(v, material);
        Mat3 dm;
        dm.col(0) = v[1] - v[0];
        dm.col(1) = v[2] - v[0];
        dm.col(2) = v[3] - v[0];
        model.rest_shape_inv[t] = dm.inverse();
        for (int a = 0; a < 4; ++a)
            model.node_mass[tet[a]] += 0.25 * material.density * volume;
    }

    model.node_fixed.assign(model.mesh.node_count(), 0);
    for (int n : model.mesh.fixed_nodes) model.node_fixed[n] = 1;
    model.free_index.assign(model.mesh.node_count(), -1);
    for (int n = 0; n < model.mesh.node_count(); ++n)
        if (!model.node_fixed[n]) model.free_index[n] = model.free_node_count++;
    return model;
}

TissueState rest_state(const TissueModel& model) {
    TissueState state;
    state.positions = model.mesh.nodes;
    state.velocities.setZero(model.mesh.node_count(), 3);
    return state;
}

Mat3 polar_rotation(const Mat3& f) {
    if (std::abs(f.determinant()) < 1e-12) return Mat3::Identity();
    Mat3 r = f;
    for (int iter = 0; iter < 64; ++iter) {
        const Mat3 next = 0.5 * (r + r.inverse().transpose());
        const double change = (next - r).norm();
        r = next;
        if (change < 1e-13) break;
    }
    return r;
}

std::vector<Mat3> element_rotations(const TissueModel& model, const TissueState& state,
                                    bool* inverted) {
    if (inverted) *inverted = false;
    std::vector<Mat3> rotations(model.mesh.tet_count());
    for (int t = 0; t < model.mesh.tet_count(); ++t) {
        const auto tet = model.mesh.tets.row(t);
        Mat3 ds;
        const Vec3 p0 = state.positions.row(tet[0]);
        ds.col(0) = Vec3(state.positions.row(tet[1])) - p0;
        ds.col(1) = Vec3(state.positions.row(tet[2])) - p0;
        ds.col(2) = Vec3(state.positions.row(tet[3])) - p0;
        const Mat3 f = ds * model.rest_shape_inv[t];
        if (f.determinant() <= 0.0) {
            if (inverted) *inverted = true;
            rotations[t] = Mat3::Identity();
            continue;
        }
        rotations[t] = polar_rotation(f);
    }
    return rotations;
}

VecX corotational_force_vector(const TissueModel& model, const TissueState& state,
                               const std::vector<Mat3>& rotations) {
    VecX force = VecX::Zero(model.dof_count());
    Eigen::Matrix<double, 12, 1> local, rest;
    for (int t = 0; t < model.mesh.tet_count(); ++t) {
        const auto tet = model.mesh.tets.row(t);
        const Mat3& r = rotations[t];
        for (int a = 0; a < 4; ++a) {
            local.segment<3>(3 * a) = r.transpose() * Vec3(state.positions.row(tet[a]));
            rest.segment<3>(3 * a) = model.mesh.nodes.row(tet[a]);
        }
        const Eigen::Matrix<double, 12, 1> fl = model.element_stiffness[t] * (local - rest);
        for (int a = 0; a < 4; ++a)
            force.segment<3>(3 * tet[a]) -= r * fl.segment<3>(3 * a);
    }
    for (int n = 0; n < model.node_count(); ++n)
        if (model.node_fixed[n]) force.segment<3>(3 * n).setZero();
    return force;
}

SpMat corotational_tangent(const TissueModel& model, const std::vector<Mat3>& rotations) {
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(model.mesh.tet_count()) * 144 +
                     static_cast<std::size_t>(model.node_count()) * 3);
    for (int t = 0; t < model.mesh.tet_count(); ++t) {
        const auto tet = model.mesh.tets.row(t);
        const Mat3& r = rotations[t];
        for (int a = 0; a < 4; ++a) {
            if (model.node_fixed[tet[a]]) continue;
            for (int b = 0; b < 4; ++b) {
                if (model.node_fixed[tet[b]]) continue;
                const Mat3 block =
                    r * model.element_stiffness[t].block<3, 3>(3 * a, 3 * b) * r.transpose();
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        triplets.emplace_back(3 * tet[a] + i, 3 * tet[b] + j, block(i, j));
            }
        }
    }
    for (int n = 0; n < model.node_count(); ++n)
        if (model.node_fixed[n])
            for (int i = 0; i < 3; ++i) triplets.emplace_back(3 * n + i, 3 * n + i, 1.0);
    SpMat k(model.dof_count(), model.dof_count());
    k.setFromTriplets(triplets.begin(), triplets.end());
    return k;
}

CorotationalForces corotational_forces(const TissueModel& model, const TissueState& state) {
    bool inverted = false;
    const auto rotations = element_rotations(model, state, &inverted);
    if (inverted) throw SimulationError("tissue element inversion");
    return {corotational_force_vector(model, state, rotations),
            corotational_tangent(model, rotations)};
}

}  // namespace needleforge
