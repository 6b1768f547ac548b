#include "needleforge/simulator.hpp"

#include "needleforge/rng.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace needleforge {

const char* to_string(SimStatus status) {
    switch (status) {
        case SimStatus::PreInsertion: return "pre-insertion";
        case SimStatus::Inserting: return "inserting";
        case SimStatus::Done: return "done";
        case SimStatus::Diverged: return "diverged";
        case SimStatus::OutOfDomain: return "out-of-domain";
    }
    return "unknown";
}

namespace {

constexpr double kConstraintCompliance = 1e-8;

Vec3 rcm_axis(const Vec3& base, const Vec3& rcm_point, bool inserting,
              const Vec3& insertion_axis) {
    if (!inserting) return insertion_axis;
    const Vec3 d = rcm_point - base;
    const double n = d.norm();
    return n > 1e-12 ? Vec3(d / n) : insertion_axis;
}

RigidPose align_base(RigidPose pose, const Vec3& desired_axis) {
    const Vec3 current = pose.rotation * Vec3::UnitX();
    pose.rotation = (rotation_between(current, desired_axis) * pose.rotation).normalized();
    return pose;
}

/// Relative-velocity gather over free tissue DOFs: 3 rows per constraint, the
/// tissue side of the constraint rate with its negative sign. Lateral frames
/// are applied separately, so this matrix only changes when constraints are
/// added.
SpMat anchor_gather(const std::vector<InsertionConstraint>& constraints, int first, int last,
                    const TissueModel& model) {
    SpMat g(3 * (last - first), 3 * model.free_node_count);
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(last - first) * 12);
    for (int k = first; k < last; ++k) {
        const auto tet = model.mesh.tets.row(constraints[static_cast<std::size_t>(k)].tet);
        for (int v = 0; v < 4; ++v) {
            const int fi = model.free_index[static_cast<std::size_t>(tet[v])];
            if (fi < 0) continue;
            const double w = -constraints[static_cast<std::size_t>(k)].bary[v];
            for (int i = 0; i < 3; ++i)
                triplets.emplace_back(3 * (k - first) + i, 3 * fi + i, w);
        }
    }
    g.setFromTriplets(triplets.begin(), triplets.end());
    return g;
}

VecX flatten_rows(const Eigen::Matrix<double, Eigen::Dynamic, 3>& rows) {
    VecX v(3 * rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) v.segment<3>(3 * i) = rows.row(i);
    return v;
}

}  // namespace

RigidPose apply_effector_motion(const RigidPose& base, const EffectorCommand& cmd,
                                double speed, double dt, bool inserting,
                                const Vec3& insertion_axis) {
    RigidPose out = base;
    const Vec3 d = cmd.target_translation - base.translation;
    const double dist = d.norm();
    if (dist > 1e-15) out.translation += (std::min(dist, speed * dt) / dist) * d;
    return align_base(out, rcm_axis(out.translation, cmd.rcm_point, inserting, insertion_axis));
}

struct SimScene::Linearization {
    // Tissue: frozen co-rotational tangent and the implicit-Euler operator
    // factor over free DOFs.
    std::shared_ptr<Eigen::SimplicialLLT<SpMat>> tissue_llt;
    SpMat tissue_tangent;         // full-size
    std::vector<Mat3> rotations;  // frozen per element

    // Constraint solve cache: s = A_t^-1 G^T for the anchor gather G of the
    // first `m` constraints. Grows by 3 columns per new constraint.
    MatX s;
    int m = 0;
};

struct SimScene::StepCache {
    std::uint64_t version = 0;
    bool pre_diverged = false;
    InsertionConstraintSet set;  // advanced for this step
    AdvanceEvents events;
    std::shared_ptr<const Linearization> lin;
    SpMat j_needle, j_tissue;
    VecX f_needle;      // 6n
    // The beam is far stiffer axially than in bending, so a rotation-stale
    // tangent makes the quasi-static update overshoot; the chain stiffness is
    // banded and cheap, so it is assembled and factored exactly every step.
    MatX needle_k_f0;   // prescribed-to-free coupling block, nf x 6
    Eigen::SimplicialLLT<SpMat> needle_llt;  // dt^2 K_ff
    VecX v_end0;        // tissue end velocity, unconstrained, full DOFs
    VecX v_end0_free;
    VecX b_stab;        // 2m
    VecX jt_vend0;      // 2m
    Eigen::LLT<MatX> w_llt;
};

SimScene SimScene::build(const SceneConfig& cfg) {
    validate(cfg);
    SimScene scene;
    scene.config_ = std::make_shared<SceneConfig>(cfg);
    scene.tissue_model_ =
        std::make_shared<TissueModel>(build_tissue_model(build_foam_mesh(cfg.foam), cfg.material));
    scene.needle_model_ = std::make_shared<NeedleModel>(build_needle(cfg.needle));
    scene.tissue_ = rest_state(*scene.tissue_model_);

    RigidPose base;
    base.rotation = rotation_between(Vec3::UnitX(), cfg.insertion_axis);
    base.translation = cfg.entry_point - cfg.needle.length * cfg.insertion_axis;
    scene.needle_ = init_needle_state(*scene.needle_model_, base);

    scene.refresh_linearization(
        element_rotations(*scene.tissue_model_, scene.tissue_, nullptr));
    scene.refresh_count_ = 0;
    return scene;
}

void SimScene::refresh_linearization(const std::vector<Mat3>& rotations) {
    const double dt = config_->sim.dt;
    auto lin = std::make_shared<Linearization>();
    lin->rotations = rotations;
    lin->tissue_tangent = corotational_tangent(*tissue_model_, rotations);

    // A_t = (1 + dt*rm) M + (dt*rk + dt^2) K over free DOFs.
    const double k_scale = dt * config_->material.rayleigh_stiffness + dt * dt;
    const double m_scale = 1.0 + dt * config_->material.rayleigh_mass;
    const auto& model = *tissue_model_;
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(lin->tissue_tangent.nonZeros()));
    for (int col = 0; col < lin->tissue_tangent.outerSize(); ++col) {
        const int cf = model.free_index[static_cast<std::size_t>(col / 3)];
        if (cf < 0) continue;
        for (SpMat::InnerIterator it(lin->tissue_tangent, col); it; ++it) {
            const int rf = model.free_index[static_cast<std::size_t>(it.row() / 3)];
            if (rf < 0) continue;
            triplets.emplace_back(3 * rf + it.row() % 3, 3 * cf + col % 3,
                                  k_scale * it.value());
        }
    }
    for (int n = 0; n < model.node_count(); ++n) {
        const int fi = model.free_index[static_cast<std::size_t>(n)];
        if (fi < 0) continue;
        for (int i = 0; i < 3; ++i)
            triplets.emplace_back(3 * fi + i, 3 * fi + i, m_scale * model.node_mass[n]);
    }
    SpMat a(3 * model.free_node_count, 3 * model.free_node_count);
    a.setFromTriplets(triplets.begin(), triplets.end());
    lin->tissue_llt = std::make_shared<Eigen::SimplicialLLT<SpMat>>();
    lin->tissue_llt->compute(a);
    if (lin->tissue_llt->info() != Eigen::Success)
        throw SimulationError("tissue operator factorization failed");

    if (set_.count() > 0) {
        const SpMat g = anchor_gather(set_.constraints, 0, set_.count(), model);
        lin->s = lin->tissue_llt->solve(MatX(g.transpose()));
    }
    lin->m = set_.count();

    lin_ = std::move(lin);
    ++refresh_count_;
}

void SimScene::prepare() {
    if (cache_ && cache_->version == version_) return;
    auto cache = std::make_shared<StepCache>();
    cache->version = version_;

    bool inverted = false;
    const auto rotations = element_rotations(*tissue_model_, tissue_, &inverted);
    if (inverted || !tissue_.positions.allFinite() || !tissue_.velocities.allFinite() ||
        !needle_.positions.allFinite()) {
        cache->pre_diverged = true;
        cache_ = std::move(cache);
        return;
    }

    // Refresh the frozen tissue tangent once co-rotational drift exceeds the
    // threshold; forces below stay exact either way.
    const double cos_limit = 1.0 + 2.0 * std::cos(config_->sim.tangent_refresh_angle);
    bool refresh = false;
    for (std::size_t t = 0; t < rotations.size() && !refresh; ++t)
        refresh = (lin_->rotations[t].transpose() * rotations[t]).trace() < cos_limit;
    if (refresh) refresh_linearization(rotations);

    cache->set = set_;
    cache->events = advance_insertion(needle_, *tissue_model_, tissue_, cache->set,
                                      config_->coupling.spacing);
    if (cache->events.punch_through) {
        cache_ = std::move(cache);
        return;
    }
    if (cache->events.backed_out && lin_->m > 0) {
        // The cached anchor response columns belong to the discarded
        // constraints; drop them so a re-entry starts from fresh anchors.
        auto ext = std::make_shared<Linearization>(*lin_);
        ext->s.conservativeResize(3 * tissue_model_->free_node_count, 0);
        ext->m = 0;
        lin_ = std::move(ext);
    }

    if (cache->set.count() > lin_->m) {
        auto ext = std::make_shared<Linearization>(*lin_);
        const SpMat g_add =
            anchor_gather(cache->set.constraints, lin_->m, cache->set.count(), *tissue_model_);
        const MatX s_add = lin_->tissue_llt->solve(MatX(g_add.transpose()));
        ext->s.conservativeResize(3 * tissue_model_->free_node_count, 3 * cache->set.count());
        ext->s.rightCols(s_add.cols()) = s_add;
        ext->m = cache->set.count();
        lin_ = std::move(ext);
    }
    cache->lin = lin_;

    const double dt = config_->sim.dt;
    cache->f_needle = needle_internal_forces(*needle_model_, needle_);
    {
        const MatX kn = needle_tangent(*needle_model_, needle_);
        const int nf = needle_model_->dof_count() - 6;
        cache->needle_k_f0 = kn.block(6, 0, nf, 6);
        const SpMat kn_ff = MatX(dt * dt * kn.bottomRightCorner(nf, nf)).sparseView();
        cache->needle_llt.compute(kn_ff);
        if (cache->needle_llt.info() != Eigen::Success)
            throw SimulationError("needle operator factorization failed");
    }

    const auto& model = *tissue_model_;
    VecX f_t = corotational_force_vector(model, tissue_, rotations);
    if (config_->sim.gravity.squaredNorm() > 0.0) {
        for (int n = 0; n < model.node_count(); ++n)
            if (!model.node_fixed[static_cast<std::size_t>(n)])
                f_t.segment<3>(3 * n) += model.node_mass[n] * config_->sim.gravity;
    }
    const VecX v_full = flatten_rows(tissue_.velocities);
    const VecX kv = lin_->tissue_tangent * v_full;
    const double k_scale = dt * config_->material.rayleigh_stiffness + dt * dt;
    VecX rhs_free(3 * model.free_node_count);
    for (int n = 0; n < model.node_count(); ++n) {
        const int fi = model.free_index[static_cast<std::size_t>(n)];
        if (fi < 0) continue;
        rhs_free.segment<3>(3 * fi) =
            dt * f_t.segment<3>(3 * n) -
            dt * config_->material.rayleigh_mass * model.node_mass[n] * v_full.segment<3>(3 * n) -
            k_scale * kv.segment<3>(3 * n);
    }
    cache->v_end0_free = lin_->tissue_llt->solve(rhs_free);
    for (int n = 0; n < model.node_count(); ++n) {
        const int fi = model.free_index[static_cast<std::size_t>(n)];
        if (fi >= 0) cache->v_end0_free.segment<3>(3 * fi) += v_full.segment<3>(3 * n);
    }
    cache->v_end0 = VecX::Zero(model.dof_count());
    for (int n = 0; n < model.node_count(); ++n) {
        const int fi = model.free_index[static_cast<std::size_t>(n)];
        if (fi >= 0) cache->v_end0.segment<3>(3 * n) = cache->v_end0_free.segment<3>(3 * fi);
    }

    const int m = cache->set.count();
    if (m > 0) {
        const auto jac = constraint_jacobians(cache->set, needle_, model, tissue_);
        cache->j_needle = jac.needle;
        cache->j_tissue = jac.tissue;
        cache->b_stab = -(config_->coupling.baumgarte / dt) *
                        constraint_violations(cache->set, needle_, model, tissue_);
        cache->jt_vend0 = cache->j_tissue * cache->v_end0;

        // W = D C D^T + J_nf A_n^-1 J_nf^T with C = G S the tissue core.
        const SpMat g = anchor_gather(cache->set.constraints, 0, m, model);
        const MatX c_core = g * lin_->s;
        MatX w(2 * m, 2 * m);
        for (int k = 0; k < m; ++k) {
            const Vec3 dk[2] = {cache->set.constraints[static_cast<std::size_t>(k)].lateral0,
                                cache->set.constraints[static_cast<std::size_t>(k)].lateral1};
            for (int l = 0; l < m; ++l) {
                const Mat3 blk = c_core.block<3, 3>(3 * k, 3 * l);
                const Vec3 dl[2] = {cache->set.constraints[static_cast<std::size_t>(l)].lateral0,
                                    cache->set.constraints[static_cast<std::size_t>(l)].lateral1};
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        w(2 * k + a, 2 * l + b) = dk[a].dot(blk * dl[b]);
            }
        }
        const int nf = needle_model_->dof_count() - 6;
        const SpMat j_nf = cache->j_needle.rightCols(nf);
        const MatX jn_sol = cache->needle_llt.solve(MatX(j_nf.transpose()));
        w += MatX(j_nf * jn_sol);
        // Constraints anchored inside one tissue element have nearly dependent
        // rows, so W is only positive semi-definite; a relative compliance
        // ridge keeps the factorization and the multipliers well behaved.
        w.diagonal().array() += kConstraintCompliance * w.trace() / (2 * m);
        cache->w_llt.compute(w);
        if (cache->w_llt.info() != Eigen::Success || !w.allFinite())
            throw SimulationError("degenerate constraint system at t = " +
                                  std::to_string(time_));
    }

    cache_ = std::move(cache);
}

void SimScene::step(const EffectorCommand& cmd) {
    if (status_ == SimStatus::Diverged || status_ == SimStatus::OutOfDomain ||
        status_ == SimStatus::Done)
        throw UsageError("cannot step a scene with status " + std::string(to_string(status_)));
    prepare();
    if (cache_->pre_diverged) {
        status_ = SimStatus::Diverged;
        ++version_;
        cache_.reset();
        return;
    }
    if (cache_->events.punch_through) {
        status_ = SimStatus::OutOfDomain;
        ++version_;
        cache_.reset();
        return;
    }
    const RigidPose new_base =
        apply_effector_motion(needle_.base_pose, cmd,
                              config_->sim.insertion_speed * config_->sim.speed_headroom,
                              config_->sim.dt, cache_->set.active, config_->insertion_axis);
    run_step(new_base);
}

void SimScene::step_with_base_offset(const Vec3& offset) {
    if (status_ == SimStatus::Diverged || status_ == SimStatus::OutOfDomain ||
        status_ == SimStatus::Done)
        throw UsageError("cannot step a scene with status " + std::string(to_string(status_)));
    prepare();
    if (cache_->pre_diverged) {
        status_ = SimStatus::Diverged;
        ++version_;
        cache_.reset();
        return;
    }
    if (cache_->events.punch_through) {
        status_ = SimStatus::OutOfDomain;
        ++version_;
        cache_.reset();
        return;
    }
    RigidPose new_base = needle_.base_pose;
    new_base.translation += offset;
    new_base = align_base(new_base, rcm_axis(new_base.translation, config_->entry_point,
                                             cache_->set.active, config_->insertion_axis));
    run_step(new_base);
}

void SimScene::run_step(const RigidPose& new_base) {
    const StepCache& cache = *cache_;
    const Linearization& lin = *cache.lin;
    const double dt = config_->sim.dt;
    const auto& model = *tissue_model_;
    const int n_dof = needle_model_->dof_count();
    const int nf = n_dof - 6;

    Vec6 w_p;
    w_p.head<3>() = (new_base.translation - needle_.base_pose.translation) / dt;
    w_p.tail<3>() =
        rotvec_from_quat(new_base.rotation * needle_.base_pose.rotation.conjugate()) / dt;

    VecX rhs_n = dt * cache.f_needle.tail(nf) - dt * dt * (cache.needle_k_f0 * w_p);
    VecX w_full(n_dof);
    w_full.head<6>() = w_p;
    w_full.tail(nf) = cache.needle_llt.solve(rhs_n);

    VecX v_end_free = cache.v_end0_free;
    const int m = cache.set.count();
    if (m > 0) {
        const VecX r = cache.b_stab - cache.jt_vend0 - cache.j_needle * w_full;
        const VecX lambda = cache.w_llt.solve(r);
        VecX dl(3 * m);
        for (int k = 0; k < m; ++k) {
            const auto& con = cache.set.constraints[static_cast<std::size_t>(k)];
            dl.segment<3>(3 * k) =
                con.lateral0 * lambda[2 * k] + con.lateral1 * lambda[2 * k + 1];
        }
        v_end_free.noalias() += lin.s * dl;
        const VecX jn_l = cache.j_needle.transpose() * lambda;
        w_full.tail(nf) += cache.needle_llt.solve(VecX(jn_l.tail(nf)));
    }

    for (int n = 0; n < model.node_count(); ++n) {
        const int fi = model.free_index[static_cast<std::size_t>(n)];
        if (fi < 0) continue;
        const Vec3 v = v_end_free.segment<3>(3 * fi);
        tissue_.velocities.row(n) = v;
        tissue_.positions.row(n) += dt * v;
    }

    for (int i = 0; i < needle_model_->n_nodes; ++i) {
        needle_.positions.row(i) += dt * Vec3(w_full.segment<3>(6 * i));
        const Vec3 wr = w_full.segment<3>(6 * i + 3);
        needle_.orientations[static_cast<std::size_t>(i)] =
            (quat_from_rotvec(dt * wr) * needle_.orientations[static_cast<std::size_t>(i)])
                .normalized();
    }
    needle_.base_pose = new_base;
    needle_.positions.row(0) = new_base.translation;
    needle_.orientations[0] = new_base.rotation;

    set_ = cache.set;
    if (cache.events.entry_created) status_ = SimStatus::Inserting;
    else if (cache.events.backed_out) status_ = SimStatus::PreInsertion;
    if (!tissue_.positions.allFinite() || !needle_.positions.allFinite() ||
        !tissue_.velocities.allFinite())
        status_ = SimStatus::Diverged;

    time_ += dt;
    ++version_;
    cache_.reset();
}

Vec3 SimScene::entry_displacement() const {
    if (!set_.active) return Vec3::Zero();
    const auto& entry = set_.entry();
    return anchor_position(entry, *tissue_model_, tissue_) - entry.rest_point;
}

double SimScene::max_lateral_violation() const {
    if (!set_.active) return 0.0;
    return constraint_violations(set_, needle_, *tissue_model_, tissue_)
        .cwiseAbs()
        .maxCoeff();
}

void SimScene::mark_done() {
    if (status_ == SimStatus::PreInsertion || status_ == SimStatus::Inserting)
        status_ = SimStatus::Done;
}

std::uint64_t SimScene::state_hash() const {
    std::uint64_t h = fnv1a(tissue_.positions.data(),
                            sizeof(double) * static_cast<std::size_t>(tissue_.positions.size()));
    h = fnv1a(tissue_.velocities.data(),
              sizeof(double) * static_cast<std::size_t>(tissue_.velocities.size()), h);
    h = fnv1a(needle_.positions.data(),
              sizeof(double) * static_cast<std::size_t>(needle_.positions.size()), h);
    for (const auto& q : needle_.orientations)
        h = fnv1a(q.coeffs().data(), sizeof(double) * 4, h);
    h = fnv1a(needle_.base_pose.translation.data(), sizeof(double) * 3, h);
    h = fnv1a(needle_.base_pose.rotation.coeffs().data(), sizeof(double) * 4, h);
    h = fnv1a(&time_, sizeof time_, h);
    const int status = static_cast<int>(status_);
    h = fnv1a(&status, sizeof status, h);
    for (const auto& c : set_.constraints) h = fnv1a(&c.arc, sizeof c.arc, h);
    return h;
}

}  // namespace needleforge
