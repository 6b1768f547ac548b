#include "needleforge/mesh.hpp"

#include "needleforge/errors.hpp"
#include "needleforge/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <utility>

namespace needleforge {
namespace {

// The six axis orders of the Kuhn subdivision: each tet walks the cube
// diagonal one axis at a time.
constexpr int kAxisOrders[6][3] = {
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
};

void extract_surface(TetMesh& mesh) {
    struct FaceUse {
        int count = 0;
        std::array<int, 3> verts{};  // as seen from the first tet
        int opposite = -1;
    };
    std::map<std::array<int, 3>, FaceUse> faces;
    for (int t = 0; t < mesh.tet_count(); ++t) {
        const auto tet = mesh.tets.row(t);
        for (int f = 0; f < 4; ++f) {
            std::array<int, 3> tri{};
            int k = 0;
            for (int v = 0; v < 4; ++v)
                if (v != f) tri[k++] = tet[v];
            std::array<int, 3> key = tri;
            std::sort(key.begin(), key.end());
            auto& use = faces[key];
            if (use.count++ == 0) {
                use.verts = tri;
                use.opposite = tet[f];
            }
        }
    }
    std::vector<std::array<int, 3>> boundary;
    for (const auto& [key, use] : faces) {
        if (use.count != 1) continue;
        auto tri = use.verts;
        const Vec3 a = mesh.nodes.row(tri[0]);
        const Vec3 b = mesh.nodes.row(tri[1]);
        const Vec3 c = mesh.nodes.row(tri[2]);
        const Vec3 inward = Vec3(mesh.nodes.row(use.opposite)) - a;
        if ((b - a).cross(c - a).dot(inward) > 0.0) std::swap(tri[1], tri[2]);
        boundary.push_back(tri);
    }
    mesh.surface_faces.resize(static_cast<Eigen::Index>(boundary.size()), 3);
    for (std::size_t i = 0; i < boundary.size(); ++i)
        for (int j = 0; j < 3; ++j) mesh.surface_faces(static_cast<Eigen::Index>(i), j) = boundary[i][j];
}

bool bary_inside(const Vec4& w, double tol) {
    return w.minCoeff() >= -tol;
}

std::optional<PointLocation> locate_in(const TetMesh& mesh,
                                       const Eigen::Matrix<double, Eigen::Dynamic, 3>& pos,
                                       const Vec3& p, int hint) {
    const double tol = 1e-10;
    auto test = [&](int t) -> std::optional<PointLocation> {
        const auto tet = mesh.tets.row(t);
        Vec4 w = barycentric_coordinates(pos.row(tet[0]), pos.row(tet[1]), pos.row(tet[2]),
                                         pos.row(tet[3]), p);
        if (bary_inside(w, tol)) return PointLocation{t, w};
        return std::nullopt;
    };
    if (hint >= 0 && hint < mesh.tet_count()) {
        if (auto loc = test(hint)) return loc;
    }
    for (int t = 0; t < mesh.tet_count(); ++t) {
        if (auto loc = test(t)) return loc;
    }
    return std::nullopt;
}

}  // namespace

double tet_volume(const TetMesh& mesh, int tet) {
    const auto t = mesh.tets.row(tet);
    return signed_volume(mesh.nodes.row(t[0]), mesh.nodes.row(t[1]), mesh.nodes.row(t[2]),
                         mesh.nodes.row(t[3]));
}

TetMesh build_foam_mesh(const FoamSpec& spec) {
    if (!(spec.size.array() > 0.0).all())
        throw ConfigError("foam size must be positive in every axis");
    if (!(spec.resolution.array() >= 1).all())
        throw ConfigError("foam resolution must be at least 1 cell per axis");

    const int nx = spec.resolution.x(), ny = spec.resolution.y(), nz = spec.resolution.z();
    const Vec3 h = spec.size.array() / spec.resolution.cast<double>().array();

    TetMesh mesh;
    mesh.nodes.resize((nx + 1) * (ny + 1) * (nz + 1), 3);
    auto node_id = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                mesh.nodes.row(node_id(i, j, k)) = Vec3(i * h.x(), j * h.y(), k * h.z());

    mesh.tets.resize(6 * nx * ny * nz, 4);
    int t = 0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                for (const auto& order : kAxisOrders) {
                    int corner[3] = {i, j, k};
                    Eigen::Vector4i tet;
                    tet[0] = node_id(corner[0], corner[1], corner[2]);
                    for (int step = 0; step < 3; ++step) {
                        ++corner[order[step]];
                        tet[step + 1] = node_id(corner[0], corner[1], corner[2]);
                    }
                    const Vec3 a = mesh.nodes.row(tet[0]), b = mesh.nodes.row(tet[1]);
                    const Vec3 c = mesh.nodes.row(tet[2]), d = mesh.nodes.row(tet[3]);
                    if (signed_volume(a, b, c, d) < 0.0) std::swap(tet[1], tet[2]);
                    mesh.tets.row(t++) = tet;
                }

    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) mesh.fixed_nodes.push_back(node_id(i, j, nz));

    extract_surface(mesh);
    return mesh;
}

Vec4 barycentric_coordinates(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                             const Vec3& p) {
    Mat3 m;
    m.col(0) = b - a;
    m.col(1) = c - a;
    m.col(2) = d - a;
    const Vec3 w = m.partialPivLu().solve(p - a);
    return Vec4(1.0 - w.sum(), w[0], w[1], w[2]);
}

std::optional<PointLocation> locate_point(const TetMesh& mesh, const Vec3& p, int hint) {
    return locate_in(mesh, mesh.nodes, p, hint);
}

std::optional<PointLocation> locate_point_deformed(
    const TetMesh& mesh, const Eigen::Matrix<double, Eigen::Dynamic, 3>& positions,
    const Vec3& p, int hint) {
    return locate_in(mesh, positions, p, hint);
}

std::uint64_t mesh_hash(const TetMesh& mesh) {
    std::uint64_t h = fnv1a(mesh.nodes.data(), sizeof(double) * 3 * mesh.nodes.rows());
    h = fnv1a(mesh.tets.data(), sizeof(int) * 4 * mesh.tets.rows(), h);
    h = fnv1a(mesh.fixed_nodes.data(), sizeof(int) * mesh.fixed_nodes.size(), h);
    return h;
}

std::string mesh_to_json(const TetMesh& mesh, const FoamSpec& spec) {
    nlohmann::ordered_json j;
    j["size_mm"] = {spec.size.x() * kMillimetresPerMetre, spec.size.y() * kMillimetresPerMetre,
                    spec.size.z() * kMillimetresPerMetre};
    j["resolution"] = {spec.resolution.x(), spec.resolution.y(), spec.resolution.z()};
    j["node_count"] = mesh.node_count();
    j["tet_count"] = mesh.tet_count();
    auto& nodes = j["nodes_mm"] = nlohmann::ordered_json::array();
    for (int i = 0; i < mesh.node_count(); ++i)
        nodes.push_back({mesh.nodes(i, 0) * kMillimetresPerMetre,
                         mesh.nodes(i, 1) * kMillimetresPerMetre,
                         mesh.nodes(i, 2) * kMillimetresPerMetre});
    auto& tets = j["tets"] = nlohmann::ordered_json::array();
    for (int t = 0; t < mesh.tet_count(); ++t)
        tets.push_back({mesh.tets(t, 0), mesh.tets(t, 1), mesh.tets(t, 2), mesh.tets(t, 3)});
    j["fixed_nodes"] = mesh.fixed_nodes;
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(mesh_hash(mesh)));
    j["hash"] = hash;
    return j.dump(2) + "\n";
}

TetMesh mesh_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("mesh json parse failure: ") + e.what());
    }
    TetMesh mesh;
    try {
        const auto& nodes = j.at("nodes_mm");
        mesh.nodes.resize(static_cast<Eigen::Index>(nodes.size()), 3);
        for (Eigen::Index i = 0; i < mesh.nodes.rows(); ++i)
            for (int c = 0; c < 3; ++c)
                mesh.nodes(i, c) = nodes.at(i).at(c).get<double>() / kMillimetresPerMetre;
        const auto& tets = j.at("tets");
        mesh.tets.resize(static_cast<Eigen::Index>(tets.size()), 4);
        for (Eigen::Index t = 0; t < mesh.tets.rows(); ++t)
            for (int c = 0; c < 4; ++c) mesh.tets(t, c) = tets.at(t).at(c).get<int>();
        mesh.fixed_nodes = j.at("fixed_nodes").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("mesh json missing field: ") + e.what());
    }
    for (int t = 0; t < mesh.tet_count(); ++t) {
        if (mesh.tets.row(t).minCoeff() < 0 || mesh.tets.row(t).maxCoeff() >= mesh.node_count())
            throw DataError("mesh json: tet index out of range");
        if (tet_volume(mesh, t) <= 0.0) throw MeshError("mesh json: non-positive tet volume");
    }
    for (int n : mesh.fixed_nodes)
        if (n < 0 || n >= mesh.node_count()) throw DataError("mesh json: fixed node out of range");
    extract_surface(mesh);
    return mesh;
}

}  // namespace needleforge
