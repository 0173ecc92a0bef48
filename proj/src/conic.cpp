#include "gridflex/conic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "gridflex/errors.hpp"
#include "json_util.hpp"

// Primal-dual interior-point solver for
//     min c'x  s.t.  A x = b,  G x <= h,  rotated cone blocks on x,
// run on the homogeneous self-dual embedding with Nesterov-Todd scaling
// and Mehrotra predictor-corrector steps (the conelp scheme of CVXOPT /
// ECOS, in dense form).
//
// Internally everything is reduced to the standard cone form
//     min c'x  s.t.  A x = b,  G x + s = h,  s in K,
// where K = R+^l x Q^{d_1} x ... x Q^{d_N} and each user cone block
// u*w >= |z|^2 becomes the second-order cone constraint
//     (u + w, u - w, 2 z) in Q^{2+|z|}
// expressed through extra rows of G with h = 0.

namespace gridflex::conic {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeLayout {
    int orth = 0;              // leading nonnegative-orthant rows
    std::vector<int> soc;      // dimensions of the SOC blocks that follow
    std::vector<int> start;    // offset of each SOC block
    int total = 0;

    int degree() const { return orth + static_cast<int>(soc.size()); }
};

// Internal problem data, sparse rows over dense vectors.
struct InternalData {
    int n = 0, p = 0, m = 0;
    std::vector<SparseRow> A, G;
    VectorXd b, h, c;
    ConeLayout cone;
};

double sparse_dot(const SparseRow& row, const VectorXd& x) {
    double acc = 0.0;
    for (auto [j, a] : row) acc += a * x[j];
    return acc;
}

// y += alpha * Mat' * v  for Mat given as rows
void add_transpose_times(const std::vector<SparseRow>& rows, const VectorXd& v, double alpha,
                         VectorXd& y) {
    for (size_t i = 0; i < rows.size(); ++i)
        for (auto [j, a] : rows[i]) y[j] += alpha * a * v[static_cast<int>(i)];
}

VectorXd mat_times(const std::vector<SparseRow>& rows, const VectorXd& x) {
    VectorXd y(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) y[static_cast<int>(i)] = sparse_dot(rows[i], x);
    return y;
}

// ---- cone utilities on the internal layout ----

VectorXd cone_identity(const ConeLayout& cone) {
    VectorXd e = VectorXd::Zero(cone.total);
    for (int i = 0; i < cone.orth; ++i) e[i] = 1.0;
    for (size_t k = 0; k < cone.soc.size(); ++k) e[cone.start[k]] = 1.0;
    return e;
}

// smallest t such that u + t*e is in the cone (negative if interior)
double cone_depth(const VectorXd& u, const ConeLayout& cone) {
    double t = -kInf;
    for (int i = 0; i < cone.orth; ++i) t = std::max(t, -u[i]);
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const auto seg = u.segment(cone.start[k] + 1, cone.soc[k] - 1);
        t = std::max(t, seg.norm() - u[cone.start[k]]);
    }
    return t;
}

// largest step a with u + a*d in the cone; u strictly interior
double step_to_boundary(const VectorXd& u, const VectorXd& d, const ConeLayout& cone) {
    double alpha = kInf;
    for (int i = 0; i < cone.orth; ++i)
        if (d[i] < 0.0) alpha = std::min(alpha, -u[i] / d[i]);
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        const int d1 = cone.soc[k] - 1;
        const auto u1 = u.segment(s0 + 1, d1);
        const auto v1 = d.segment(s0 + 1, d1);
        // roots of (u0+a*d0)^2 - |u1+a*v1|^2 = qa*a^2 + 2*qb*a + qc
        const double qa = d[s0] * d[s0] - v1.squaredNorm();
        const double qb = u[s0] * d[s0] - u1.dot(v1);
        const double qc = u[s0] * u[s0] - u1.squaredNorm(); // > 0 in the interior
        double blockstep = kInf;
        if (qa == 0.0) {
            if (qb < 0.0) blockstep = -qc / (2.0 * qb);
        } else {
            double disc = qb * qb - qa * qc;
            if (disc >= 0.0) {
                const double root = std::sqrt(disc);
                const double q0 = -(qb + std::copysign(root, qb));
                double r1 = (qa != 0.0) ? q0 / qa : kInf;
                double r2 = (q0 != 0.0) ? qc / q0 : kInf;
                blockstep = kInf;
                if (r1 > 0.0) blockstep = std::min(blockstep, r1);
                if (r2 > 0.0) blockstep = std::min(blockstep, r2);
            } else if (qa < 0.0) {
                blockstep = 0.0; // numerically impossible from the interior
            }
        }
        alpha = std::min(alpha, blockstep);
    }
    return alpha;
}

// Jordan product u o v
VectorXd jordan_product(const VectorXd& u, const VectorXd& v, const ConeLayout& cone) {
    VectorXd r(cone.total);
    for (int i = 0; i < cone.orth; ++i) r[i] = u[i] * v[i];
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        const int d1 = cone.soc[k] - 1;
        const auto u1 = u.segment(s0 + 1, d1);
        const auto v1 = v.segment(s0 + 1, d1);
        r[s0] = u.segment(s0, cone.soc[k]).dot(v.segment(s0, cone.soc[k]));
        r.segment(s0 + 1, d1) = u[s0] * v1 + v[s0] * u1;
    }
    return r;
}

// solves lambda o u = d
VectorXd jordan_solve(const VectorXd& lambda, const VectorXd& d, const ConeLayout& cone) {
    VectorXd u(cone.total);
    for (int i = 0; i < cone.orth; ++i) u[i] = d[i] / lambda[i];
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        const int d1 = cone.soc[k] - 1;
        const auto l1 = lambda.segment(s0 + 1, d1);
        const auto d1v = d.segment(s0 + 1, d1);
        const double denom = lambda[s0] * lambda[s0] - l1.squaredNorm();
        const double u0 = (lambda[s0] * d[s0] - l1.dot(d1v)) / denom;
        u[s0] = u0;
        u.segment(s0 + 1, d1) = (d1v - u0 * l1) / lambda[s0];
    }
    return u;
}

// Nesterov-Todd scaling: symmetric W with W z = W^{-1} s = lambda.
struct NTScaling {
    VectorXd w_orth;                 // sqrt(s_i / z_i)
    struct Soc {
        double beta = 1.0;
        VectorXd v;                  // unit hyperbolic vector, W = beta (2 v v' - J)
    };
    std::vector<Soc> soc;
    VectorXd lambda;

    static std::optional<NTScaling> compute(const VectorXd& s, const VectorXd& z,
                                            const ConeLayout& cone);
    VectorXd apply(const VectorXd& u, const ConeLayout& cone) const;     // W u
    VectorXd apply_inv(const VectorXd& u, const ConeLayout& cone) const; // W^{-1} u
};

// v-parameterized hyperbolic reflection: beta * (2 v (v'u) - J u)
void soc_reflect(double beta, const VectorXd& v, const double* u, double* out, int dim) {
    double dot = 0.0;
    for (int i = 0; i < dim; ++i) dot += v[i] * u[i];
    out[0] = beta * (2.0 * v[0] * dot - u[0]);
    for (int i = 1; i < dim; ++i) out[i] = beta * (2.0 * v[i] * dot + u[i]);
}

std::optional<NTScaling> NTScaling::compute(const VectorXd& s, const VectorXd& z,
                                            const ConeLayout& cone) {
    NTScaling nt;
    nt.w_orth.resize(cone.orth);
    for (int i = 0; i < cone.orth; ++i) {
        if (!(s[i] > 0.0) || !(z[i] > 0.0)) return std::nullopt;
        nt.w_orth[i] = std::sqrt(s[i] / z[i]);
    }
    nt.soc.resize(cone.soc.size());
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        const int dim = cone.soc[k];
        const auto sb = s.segment(s0, dim);
        const auto zb = z.segment(s0, dim);
        // (t - |u|)(t + |u|) keeps the tiny interior margin out of the
        // cancellation that t^2 - |u|^2 would produce
        const double sn = sb.tail(dim - 1).norm();
        const double zn = zb.tail(dim - 1).norm();
        const double sres = (sb[0] - sn) * (sb[0] + sn);
        const double zres = (zb[0] - zn) * (zb[0] + zn);
        if (!(sres > 0.0) || !(zres > 0.0) || !(sb[0] > 0.0) || !(zb[0] > 0.0))
            return std::nullopt;
        const double a = std::sqrt(sres);
        const double b = std::sqrt(zres);
        VectorXd sbar = sb / a, zbar = zb / b;
        const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
        // wbar = (sbar + J zbar) / (2 gamma), a unit hyperbolic vector
        VectorXd wbar(dim);
        wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
        wbar.tail(dim - 1) = (sbar.tail(dim - 1) - zbar.tail(dim - 1)) / (2.0 * gamma);
        NTScaling::Soc sc;
        sc.beta = std::sqrt(a / b);
        sc.v = wbar;
        sc.v[0] += 1.0;
        sc.v /= std::sqrt(2.0 * (wbar[0] + 1.0));
        nt.soc[k] = std::move(sc);
    }
    nt.lambda = nt.apply(z, cone);
    return nt;
}

VectorXd NTScaling::apply(const VectorXd& u, const ConeLayout& cone) const {
    VectorXd r(cone.total);
    for (int i = 0; i < cone.orth; ++i) r[i] = w_orth[i] * u[i];
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        soc_reflect(soc[k].beta, soc[k].v, u.data() + s0, r.data() + s0, cone.soc[k]);
    }
    return r;
}

VectorXd NTScaling::apply_inv(const VectorXd& u, const ConeLayout& cone) const {
    VectorXd r(cone.total);
    for (int i = 0; i < cone.orth; ++i) r[i] = u[i] / w_orth[i];
    for (size_t k = 0; k < cone.soc.size(); ++k) {
        const int s0 = cone.start[k];
        const int dim = cone.soc[k];
        // W^{-1} = beta^{-1} (2 (Jv)(Jv)' - J)
        VectorXd vj = soc[k].v;
        vj.tail(dim - 1) = -vj.tail(dim - 1);
        soc_reflect(1.0 / soc[k].beta, vj, u.data() + s0, r.data() + s0, dim);
    }
    return r;
}

// ---- internal form construction ----

InternalData build_internal(const ConicProgram& prog) {
    InternalData d;
    d.n = prog.num_vars;
    d.p = prog.num_eq();
    d.A = prog.eq_rows;
    d.b = Eigen::Map<const VectorXd>(prog.eq_rhs.data(), prog.eq_rhs.size());
    d.c = Eigen::Map<const VectorXd>(prog.c.data(), prog.c.size());

    d.G = prog.ineq_rows;
    std::vector<double> h(prog.ineq_rhs);
    d.cone.orth = prog.num_ineq();
    for (const ConeBlock& blk : prog.cones) {
        const int dim = 2 + static_cast<int>(blk.z.size());
        d.cone.start.push_back(static_cast<int>(d.G.size()));
        d.cone.soc.push_back(dim);
        // s = (u + w, u - w, 2 z) with  G x + s = 0
        d.G.push_back({{blk.u, -1.0}, {blk.w, -1.0}});
        d.G.push_back({{blk.u, -1.0}, {blk.w, 1.0}});
        for (int zi : blk.z) d.G.push_back({{zi, -2.0}});
        for (int i = 0; i < dim; ++i) h.push_back(0.0);
    }
    d.m = static_cast<int>(d.G.size());
    d.cone.total = d.m;
    d.h = Eigen::Map<const VectorXd>(h.data(), h.size());
    return d;
}

// Ruiz equilibration of the stacked (A; G); SOC rows of one block share a
// common scale so the cone geometry survives.
struct Scaling {
    VectorXd row_a, row_g, col;
    double sigma_c = 1.0, sigma_r = 1.0;
};

Scaling equilibrate(InternalData& d, int sweeps) {
    Scaling sc;
    sc.row_a = VectorXd::Ones(d.p);
    sc.row_g = VectorXd::Ones(d.m);
    sc.col = VectorXd::Ones(d.n);

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        VectorXd rn_a = VectorXd::Zero(d.p), rn_g = VectorXd::Zero(d.m),
                 cn = VectorXd::Zero(d.n);
        for (int i = 0; i < d.p; ++i)
            for (auto [j, a] : d.A[i]) {
                double v = std::abs(a) * sc.row_a[i] * sc.col[j];
                rn_a[i] = std::max(rn_a[i], v);
                cn[j] = std::max(cn[j], v);
            }
        for (int i = 0; i < d.m; ++i)
            for (auto [j, a] : d.G[i]) {
                double v = std::abs(a) * sc.row_g[i] * sc.col[j];
                rn_g[i] = std::max(rn_g[i], v);
                cn[j] = std::max(cn[j], v);
            }
        // one scale per SOC block
        for (size_t k = 0; k < d.cone.soc.size(); ++k) {
            double blockmax = 0.0;
            for (int r = 0; r < d.cone.soc[k]; ++r)
                blockmax = std::max(blockmax, rn_g[d.cone.start[k] + r]);
            for (int r = 0; r < d.cone.soc[k]; ++r) rn_g[d.cone.start[k] + r] = blockmax;
        }
        for (int i = 0; i < d.p; ++i)
            if (rn_a[i] > 0.0) sc.row_a[i] /= std::sqrt(rn_a[i]);
        for (int i = 0; i < d.m; ++i)
            if (rn_g[i] > 0.0) sc.row_g[i] /= std::sqrt(rn_g[i]);
        for (int j = 0; j < d.n; ++j)
            if (cn[j] > 0.0) sc.col[j] /= std::sqrt(cn[j]);
    }

    for (int i = 0; i < d.p; ++i)
        for (auto& [j, a] : d.A[i]) a *= sc.row_a[i] * sc.col[j];
    for (int i = 0; i < d.m; ++i)
        for (auto& [j, a] : d.G[i]) a *= sc.row_g[i] * sc.col[j];
    for (int j = 0; j < d.n; ++j) d.c[j] *= sc.col[j];
    d.b.array() *= sc.row_a.array();
    d.h.array() *= sc.row_g.array();

    sc.sigma_c = 1.0 / std::max(1.0, d.c.lpNorm<Eigen::Infinity>());
    double rhs_norm = std::max(d.p ? d.b.lpNorm<Eigen::Infinity>() : 0.0,
                               d.m ? d.h.lpNorm<Eigen::Infinity>() : 0.0);
    sc.sigma_r = 1.0 / std::max(1.0, rhs_norm);
    d.c *= sc.sigma_c;
    d.b *= sc.sigma_r;
    d.h *= sc.sigma_r;
    return sc;
}

// ---- KKT system ----
//
//   [ 0   A'  G' ] [dx]   [rx]
//   [ A   0   0  ] [dy] = [ry]      with the (3,3) block -W^2,
//   [ G   0  -W^2] [dz]   [rz]
//
// reduced to  [[M, A'], [A, 0]]  with  M = G' W^{-2} G.

class KktSolver {
public:
    KktSolver(const InternalData& d, double reg)
        : d_(d), reg_(reg), dim_(d.n + d.p), M_(d.n, d.n), kkt_(dim_, dim_) {
        template_ = MatrixXd::Zero(dim_, dim_);
        for (int i = 0; i < d_.p; ++i)
            for (auto [j, a] : d_.A[i]) {
                template_(d_.n + i, j) = a;
                template_(j, d_.n + i) = a;
            }
    }

    // factor for the current scaling; returns false on breakdown
    bool factor(const NTScaling& nt) {
        M_.setZero();
        for (int i = 0; i < d_.cone.orth; ++i) {
            const double w = nt.w_orth[i];
            const double dinv = 1.0 / (w * w);
            for (auto [ja, aa] : d_.G[i])
                for (auto [jb, ab] : d_.G[i]) M_(ja, jb) += dinv * aa * ab;
        }
        for (size_t k = 0; k < d_.cone.soc.size(); ++k) {
            const int dim = d_.cone.soc[k];
            const int s0 = d_.cone.start[k];
            // B = (W^{-1})^2 restricted to the block
            MatrixXd Winv(dim, dim), B(dim, dim);
            VectorXd vj = nt.soc[k].v;
            vj.tail(dim - 1) = -vj.tail(dim - 1);
            const double bi = 1.0 / nt.soc[k].beta;
            MatrixXd J = -MatrixXd::Identity(dim, dim);
            J(0, 0) = 1.0;
            Winv = bi * (2.0 * vj * vj.transpose() - J);
            B = Winv * Winv;
            for (int r1 = 0; r1 < dim; ++r1)
                for (int r2 = 0; r2 < dim; ++r2) {
                    const double coef = B(r1, r2);
                    for (auto [ja, aa] : d_.G[s0 + r1])
                        for (auto [jb, ab] : d_.G[s0 + r2]) M_(ja, jb) += coef * aa * ab;
                }
        }

        kkt_ = template_;
        kkt_.topLeftCorner(d_.n, d_.n) += M_;
        kkt_.topLeftCorner(d_.n, d_.n).diagonal().array() += reg_;
        kkt_.bottomRightCorner(d_.p, d_.p).diagonal().array() -= reg_;
        lu_.compute(kkt_);
        nt_ = &nt;
        return kkt_.allFinite();
    }

    // Solve the 3x3 system for (dx, dy, dz). The reduced solve recovers dz
    // through W^{-2}, which is badly conditioned near the cone boundary, so
    // the result is polished with iterative refinement against the full 3x3
    // system (whose residual only needs the benign W^2 product).
    void solve(const VectorXd& rx, const VectorXd& ry, const VectorXd& rz, VectorXd& dx,
               VectorXd& dy, VectorXd& dz) const {
        dx = VectorXd::Zero(d_.n);
        dy = VectorXd::Zero(d_.p);
        dz = VectorXd::Zero(d_.m);
        VectorXd r1 = rx, r2 = ry, r3 = rz;
        const double rhs_scale =
            std::max({1.0, rx.lpNorm<Eigen::Infinity>(),
                      d_.p ? ry.lpNorm<Eigen::Infinity>() : 0.0, rz.lpNorm<Eigen::Infinity>()});
        for (int pass = 0; pass < 3; ++pass) {
            VectorXd winv2_r3 = nt_->apply_inv(nt_->apply_inv(r3, d_.cone), d_.cone);
            VectorXd rhs(dim_);
            rhs.head(d_.n) = r1;
            add_transpose_times(d_.G, winv2_r3, 1.0, rhs);
            rhs.tail(d_.p) = r2;
            VectorXd sol = lu_.solve(rhs);
            dx += sol.head(d_.n);
            dy += sol.tail(d_.p);
            dz += nt_->apply_inv(nt_->apply_inv(mat_times(d_.G, sol.head(d_.n)) - r3, d_.cone),
                                 d_.cone);
            // residual of the full system
            r1 = rx;
            if (d_.p) add_transpose_times(d_.A, dy, -1.0, r1);
            add_transpose_times(d_.G, dz, -1.0, r1);
            if (d_.p) r2 = ry - mat_times(d_.A, dx);
            r3 = rz - mat_times(d_.G, dx) + nt_->apply(nt_->apply(dz, d_.cone), d_.cone);
            double rnorm = std::max({r1.lpNorm<Eigen::Infinity>(),
                                     d_.p ? r2.lpNorm<Eigen::Infinity>() : 0.0,
                                     r3.lpNorm<Eigen::Infinity>()});
            if (rnorm <= 1e-14 * rhs_scale) break;
        }
    }

private:
    const InternalData& d_;
    double reg_;
    int dim_;
    MatrixXd M_, kkt_, template_;
    Eigen::PartialPivLU<MatrixXd> lu_;
    const NTScaling* nt_ = nullptr;
};

// metrics of the deflated iterate against the original-scale data
struct Metrics {
    double pres = kInf, dres = kInf, gap = kInf, relgap = kInf;
    double pobj = 0.0, dobj = 0.0;
};

} // namespace

void ConicProgram::validate() const {
    auto check_rows = [&](const std::vector<SparseRow>& rows, const std::vector<double>& rhs,
                          const char* what) {
        if (rows.size() != rhs.size())
            throw InputError(std::string("conic program: ") + what + " rows/rhs size mismatch");
        for (const SparseRow& row : rows)
            for (auto [j, a] : row) {
                if (j < 0 || j >= num_vars)
                    throw InputError(std::string("conic program: ") + what +
                                     " column index out of range");
                if (!std::isfinite(a))
                    throw InputError(std::string("conic program: ") + what +
                                     " non-finite coefficient");
            }
    };
    if (static_cast<int>(c.size()) != num_vars)
        throw InputError("conic program: objective size mismatch");
    check_rows(eq_rows, eq_rhs, "equality");
    check_rows(ineq_rows, ineq_rhs, "inequality");
    std::vector<bool> used(num_vars, false);
    for (const ConeBlock& blk : cones) {
        std::vector<int> members = blk.z;
        members.push_back(blk.u);
        members.push_back(blk.w);
        for (int j : members) {
            if (j < 0 || j >= num_vars)
                throw InputError("conic program: cone index out of range");
            if (used[j]) throw InputError("conic program: variable in two cone blocks");
            used[j] = true;
        }
    }
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::PrimalInfeasible: return "primal-infeasible";
        case SolveStatus::DualInfeasible: return "dual-infeasible";
        case SolveStatus::IterationLimit: return "iteration-limit";
        case SolveStatus::NumericalFailure: return "numerical-failure";
    }
    return "unknown";
}

SolverResult solve(const ConicProgram& prog, const SolverConfig& cfg) {
    prog.validate();

    SolverResult out;
    out.x.assign(prog.num_vars, 0.0);
    out.y_eq.assign(prog.num_eq(), 0.0);
    out.z_ineq.assign(prog.num_ineq(), 0.0);
    out.cone_duals.assign(prog.cones.size(), {});

    // fully unconstrained programs never reach the interior-point loop
    if (prog.num_eq() == 0 && prog.num_ineq() == 0 && prog.cones.empty()) {
        bool zero = true;
        for (double ci : prog.c) zero = zero && ci == 0.0;
        out.status = zero ? SolveStatus::Optimal : SolveStatus::DualInfeasible;
        out.message = zero ? "" : "objective unbounded below (no constraints)";
        return out;
    }

    InternalData data = build_internal(prog);
    const InternalData orig = data; // unscaled copy for termination metrics
    Scaling sc = equilibrate(data, cfg.ruiz_iterations);

    const int n = data.n, p = data.p, m = data.m;
    const double nu = static_cast<double>(data.cone.degree());

    const double norm_b = p ? orig.b.lpNorm<Eigen::Infinity>() : 0.0;
    const double norm_h = m ? orig.h.lpNorm<Eigen::Infinity>() : 0.0;
    const double norm_c = orig.c.lpNorm<Eigen::Infinity>();

    VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(p);
    VectorXd s(m), z(m);
    double tau = 1.0, kappa = 1.0;

    KktSolver kkt(data, cfg.static_reg);

    // ---- initial point: two least-squares solves at W = I ----
    {
        NTScaling eye;
        eye.w_orth = VectorXd::Ones(data.cone.orth);
        eye.soc.resize(data.cone.soc.size());
        for (size_t k = 0; k < data.cone.soc.size(); ++k) {
            eye.soc[k].beta = 1.0;
            eye.soc[k].v = VectorXd::Zero(data.cone.soc[k]);
            eye.soc[k].v[0] = 1.0;
        }
        eye.lambda = VectorXd::Ones(m);
        if (!kkt.factor(eye)) {
            out.status = SolveStatus::NumericalFailure;
            out.message = "initial KKT factorization failed";
            return out;
        }
        VectorXd dx(n), dy(p), dz(m);
        kkt.solve(VectorXd::Zero(n), data.b, data.h, dx, dy, dz);
        x = dx;
        s = -dz; // s = h - G x
        double depth = cone_depth(s, data.cone);
        if (depth >= 0.0) s += (1.0 + depth) * cone_identity(data.cone);

        kkt.solve(-data.c, VectorXd::Zero(p), VectorXd::Zero(m), dx, dy, dz);
        y = dy;
        z = dz;
        depth = cone_depth(z, data.cone);
        if (depth >= 0.0) z += (1.0 + depth) * cone_identity(data.cone);
    }

    const VectorXd e = cone_identity(data.cone);
    Metrics mt;
    int iter = 0;
    std::string fail_message;
    auto status = SolveStatus::IterationLimit;

    // The tolerances may sit right at the accuracy limit of the KKT solves,
    // so the loop keeps the best iterate seen and every exit path reports
    // that one instead of whatever the final step produced.
    struct Best {
        double score = std::numeric_limits<double>::infinity();
        Metrics mt;
        VectorXd xu, yu, zu;
    } best;

    auto fill_from_best = [&] {
        if (!best.xu.size()) return;
        Eigen::Map<VectorXd>(out.x.data(), n) = best.xu;
        if (p) Eigen::Map<VectorXd>(out.y_eq.data(), p) = best.yu;
        for (int i = 0; i < prog.num_ineq(); ++i) out.z_ineq[i] = std::max(0.0, best.zu[i]);
        for (size_t k = 0; k < prog.cones.size(); ++k) {
            const int s0 = data.cone.start[k];
            const int dim = data.cone.soc[k];
            // map the SOC dual back through T': (a0+a1, a0-a1, 2 rest)
            std::vector<double> mu(dim);
            mu[0] = best.zu[s0] + best.zu[s0 + 1];
            mu[1] = best.zu[s0] - best.zu[s0 + 1];
            for (int r = 2; r < dim; ++r) mu[r] = 2.0 * best.zu[s0 + r];
            out.cone_duals[k] = std::move(mu);
        }
    };

    for (iter = 0; iter <= cfg.max_iterations; ++iter) {
        // ---- termination metrics in the original data space ----
        // x_user = Dc x / (sigma_r tau), s_user = Dg^{-1} s / (sigma_r tau),
        // y_user = Da y / (sigma_c tau), z_user = Dg z / (sigma_c tau)
        VectorXd xu = (sc.col.array() * x.array()).matrix() / (sc.sigma_r * tau);
        VectorXd su = (s.array() / sc.row_g.array()).matrix() / (sc.sigma_r * tau);
        VectorXd yu = p ? VectorXd((sc.row_a.array() * y.array()).matrix() / (sc.sigma_c * tau))
                        : VectorXd(0);
        VectorXd zu = (sc.row_g.array() * z.array()).matrix() / (sc.sigma_c * tau);

        VectorXd rp1 = p ? VectorXd(mat_times(orig.A, xu) - orig.b) : VectorXd(0);
        VectorXd rp2 = mat_times(orig.G, xu) + su - orig.h;
        VectorXd rd = orig.c;
        if (p) add_transpose_times(orig.A, yu, 1.0, rd);
        add_transpose_times(orig.G, zu, 1.0, rd);

        mt.pres = std::max(p ? rp1.lpNorm<Eigen::Infinity>() / (1.0 + norm_b) : 0.0,
                           rp2.lpNorm<Eigen::Infinity>() / (1.0 + norm_h));
        mt.dres = rd.lpNorm<Eigen::Infinity>() / (1.0 + norm_c);
        mt.pobj = orig.c.dot(xu);
        mt.dobj = -(p ? orig.b.dot(yu) : 0.0) - orig.h.dot(zu);
        mt.gap = su.dot(zu);
        mt.relgap = mt.gap / std::max({1.0, std::abs(mt.pobj), std::abs(mt.dobj)});

        const double score =
            std::max({mt.pres / cfg.feastol, mt.dres / cfg.feastol,
                      std::min(mt.gap / cfg.abstol, mt.relgap / cfg.reltol)});
        if (score < best.score) {
            best.score = score;
            best.mt = mt;
            best.xu = xu;
            best.yu = yu;
            best.zu = zu;
        }
        if (best.score <= 1.0) {
            status = SolveStatus::Optimal;
            fill_from_best();
            break;
        }

        // ---- infeasibility certificates (tau-free rays) ----
        {
            VectorXd yc = p ? VectorXd((sc.row_a.array() * y.array()).matrix()) : VectorXd(0);
            VectorXd zc = (sc.row_g.array() * z.array()).matrix();
            const double db = (p ? orig.b.dot(yc) : 0.0) + orig.h.dot(zc);
            if (db < 0.0) {
                VectorXd station = VectorXd::Zero(n);
                if (p) add_transpose_times(orig.A, yc, 1.0, station);
                add_transpose_times(orig.G, zc, 1.0, station);
                if (station.lpNorm<Eigen::Infinity>() / (-db) <= cfg.feastol) {
                    status = SolveStatus::PrimalInfeasible;
                    if (p) Eigen::Map<VectorXd>(out.y_eq.data(), p) = yc / (-db);
                    for (int i = 0; i < prog.num_ineq(); ++i)
                        out.z_ineq[i] = std::max(0.0, zc[i] / (-db));
                    out.message = "primal infeasibility certificate: b'y + h'z = -1, "
                                  "|A'y + G'z| <= feastol";
                    break;
                }
            }
            VectorXd xc = (sc.col.array() * x.array()).matrix();
            VectorXd sco = (s.array() / sc.row_g.array()).matrix();
            const double dc = orig.c.dot(xc);
            if (dc < 0.0) {
                const double scale = -dc;
                double res = (mat_times(orig.G, xc) + sco).lpNorm<Eigen::Infinity>();
                if (p) res = std::max(res, mat_times(orig.A, xc).lpNorm<Eigen::Infinity>());
                if (res / scale <= cfg.feastol) {
                    status = SolveStatus::DualInfeasible;
                    Eigen::Map<VectorXd>(out.x.data(), n) = xc / scale;
                    out.message = "dual infeasibility certificate: c'x = -1, improving ray";
                    break;
                }
            }
        }

        if (iter == cfg.max_iterations) {
            status = SolveStatus::IterationLimit;
            fill_from_best();
            std::ostringstream msg;
            msg << "iteration cap " << cfg.max_iterations << " reached, pres=" << best.mt.pres
                << " dres=" << best.mt.dres << " gap=" << best.mt.gap;
            out.message = msg.str();
            break;
        }

        // ---- scaling and residuals of the HSD system ----
        auto nt = NTScaling::compute(s, z, data.cone);
        if (!nt) {
            status = SolveStatus::NumericalFailure;
            fail_message = "iterate left the cone interior at iteration " + std::to_string(iter);
            fill_from_best();
            break;
        }
        if (!kkt.factor(*nt)) {
            status = SolveStatus::NumericalFailure;
            fail_message = "KKT factorization failed at iteration " + std::to_string(iter);
            fill_from_best();
            break;
        }

        // HSD residuals: hrx = A'y + G'z + c tau, hry = Ax - b tau,
        // hrz = s + Gx - h tau, hrt = kappa + c'x + b'y + h'z
        VectorXd hrx = data.c * tau;
        if (p) add_transpose_times(data.A, y, 1.0, hrx);
        add_transpose_times(data.G, z, 1.0, hrx);
        VectorXd hry = p ? VectorXd(mat_times(data.A, x) - data.b * tau) : VectorXd(0);
        VectorXd hrz = s + mat_times(data.G, x) - data.h * tau;
        const double hrt =
            kappa + data.c.dot(x) + (p ? data.b.dot(y) : 0.0) + data.h.dot(z);
        const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);
        if (mu < 1e-14) {
            // beyond double precision; nothing more can be gained
            status = SolveStatus::NumericalFailure;
            std::ostringstream msg;
            msg << "complementarity floor reached at iteration " << iter
                << " without meeting the tolerances: pres=" << best.mt.pres
                << " dres=" << best.mt.dres << " gap=" << best.mt.gap;
            fail_message = msg.str();
            fill_from_best();
            break;
        }

        VectorXd u1x(n), u1y(p), u1z(m);
        kkt.solve(-data.c, data.b, data.h, u1x, u1y, u1z);
        const double theta_u1 =
            data.c.dot(u1x) + (p ? data.b.dot(u1y) : 0.0) + data.h.dot(u1z);
        const double dtau_denom = theta_u1 - kappa / tau;

        auto direction = [&](const VectorXd& r1, const VectorXd& r2, const VectorXd& r3t,
                             double r4, double dkap, VectorXd& dx, VectorXd& dy, VectorXd& dz,
                             double& dtau, double& dkappa) {
            VectorXd ux(n), uy(p), uz(m);
            kkt.solve(r1, r2, r3t, ux, uy, uz);
            const double theta_u2 =
                data.c.dot(ux) + (p ? data.b.dot(uy) : 0.0) + data.h.dot(uz);
            dtau = (r4 - dkap / tau - theta_u2) / dtau_denom;
            dx = ux + dtau * u1x;
            dy = p ? VectorXd(uy + dtau * u1y) : VectorXd(0);
            dz = uz + dtau * u1z;
            dkappa = (dkap - kappa * dtau) / tau;
        };

        // affine direction: ds = -lambda o lambda, so W(lambda \ ds) = -s
        VectorXd dx_a(n), dy_a(p), dz_a(m), ds_a(m);
        double dtau_a, dkappa_a;
        direction(-hrx, -hry, -hrz + s, -hrt, -tau * kappa, dx_a, dy_a, dz_a, dtau_a,
                  dkappa_a);
        ds_a = -s - nt->apply(nt->apply(dz_a, data.cone), data.cone);

        double alpha_a = std::min({1.0, step_to_boundary(s, ds_a, data.cone),
                                   step_to_boundary(z, dz_a, data.cone)});
        if (dtau_a < 0.0) alpha_a = std::min(alpha_a, -tau / dtau_a);
        if (dkappa_a < 0.0) alpha_a = std::min(alpha_a, -kappa / dkappa_a);

        const double mu_aff = ((s + alpha_a * ds_a).dot(z + alpha_a * dz_a) +
                               (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a)) /
                              (nu + 1.0);
        double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
        sigma = std::min(1.0, sigma);

        // combined direction with Mehrotra correction
        VectorXd eta = jordan_product(nt->apply_inv(ds_a, data.cone),
                                      nt->apply(dz_a, data.cone), data.cone);
        VectorXd ds_rhs =
            -jordan_product(nt->lambda, nt->lambda, data.cone) - eta + sigma * mu * e;
        const double dkap_rhs = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        const double shrink = 1.0 - sigma;

        VectorXd dx_c(n), dy_c(p), dz_c(m), ds_c(m);
        double dtau_c, dkappa_c;
        VectorXd wlds = nt->apply(jordan_solve(nt->lambda, ds_rhs, data.cone), data.cone);
        direction(-shrink * hrx, -shrink * hry, -shrink * hrz - wlds, -shrink * hrt, dkap_rhs,
                  dx_c, dy_c, dz_c, dtau_c, dkappa_c);
        ds_c = wlds - nt->apply(nt->apply(dz_c, data.cone), data.cone);

        double alpha = std::min({step_to_boundary(s, ds_c, data.cone),
                                 step_to_boundary(z, dz_c, data.cone)});
        if (dtau_c < 0.0) alpha = std::min(alpha, -tau / dtau_c);
        if (dkappa_c < 0.0) alpha = std::min(alpha, -kappa / dkappa_c);
        alpha = std::min(1.0, cfg.frac_to_boundary * alpha);

        if (!std::isfinite(alpha) || alpha <= 1e-10) {
            status = SolveStatus::NumericalFailure;
            fail_message = "step length collapsed at iteration " + std::to_string(iter);
            fill_from_best();
            break;
        }

        x += alpha * dx_c;
        if (p) y += alpha * dy_c;
        z += alpha * dz_c;
        s += alpha * ds_c;
        tau += alpha * dtau_c;
        kappa += alpha * dkappa_c;

        if (!x.allFinite() || !z.allFinite() || !s.allFinite() || !std::isfinite(tau) ||
            !std::isfinite(kappa) || tau <= 0.0) {
            status = SolveStatus::NumericalFailure;
            fail_message = "iterate became non-finite at iteration " + std::to_string(iter);
            fill_from_best();
            break;
        }
        if (cfg.verbose) {
            std::fprintf(stderr,
                         "it %3d pres %9.2e dres %9.2e gap %9.2e mu %9.2e tau %9.2e kappa "
                         "%9.2e sigma %.3f alpha %.4f\n",
                         iter, mt.pres, mt.dres, mt.gap, mu, tau, kappa, sigma, alpha);
        }
    }

    out.status = status;
    out.iterations = iter;
    const Metrics& report_mt = best.xu.size() ? best.mt : mt;
    out.primal_residual = report_mt.pres;
    out.dual_residual = report_mt.dres;
    out.gap = report_mt.gap;
    if (status == SolveStatus::NumericalFailure) out.message = fail_message;
    return out;
}

ResidualReport residuals(const ConicProgram& prog, const std::vector<double>& x,
                         const std::vector<double>& y_eq, const std::vector<double>& z_ineq,
                         const std::vector<std::vector<double>>& cone_duals) {
    if (static_cast<int>(x.size()) != prog.num_vars ||
        static_cast<int>(y_eq.size()) != prog.num_eq() ||
        static_cast<int>(z_ineq.size()) != prog.num_ineq())
        throw InputError("residuals: dimension mismatch");

    ResidualReport rep;
    // primal: equalities, inequalities, cone membership
    for (int i = 0; i < prog.num_eq(); ++i) {
        double r = -prog.eq_rhs[i];
        for (auto [j, a] : prog.eq_rows[i]) r += a * x[j];
        rep.primal_res = std::max(rep.primal_res, std::abs(r));
    }
    for (int i = 0; i < prog.num_ineq(); ++i) {
        double r = -prog.ineq_rhs[i];
        for (auto [j, a] : prog.ineq_rows[i]) r += a * x[j];
        rep.primal_res = std::max(rep.primal_res, r);
    }
    for (const ConeBlock& blk : prog.cones) {
        double zz = 0.0;
        for (int j : blk.z) zz += x[j] * x[j];
        rep.primal_res = std::max({rep.primal_res, zz - x[blk.u] * x[blk.w], -x[blk.u],
                                   -x[blk.w]});
    }

    // dual: stationarity c + A'y + G'z - scatter(mu) and dual cone membership
    std::vector<double> station(prog.c);
    for (int i = 0; i < prog.num_eq(); ++i)
        for (auto [j, a] : prog.eq_rows[i]) station[j] += a * y_eq[i];
    for (int i = 0; i < prog.num_ineq(); ++i) {
        for (auto [j, a] : prog.ineq_rows[i]) station[j] += a * z_ineq[i];
        rep.dual_res = std::max(rep.dual_res, -z_ineq[i]);
    }
    if (cone_duals.size() == prog.cones.size()) {
        for (size_t k = 0; k < prog.cones.size(); ++k) {
            const ConeBlock& blk = prog.cones[k];
            const std::vector<double>& mu = cone_duals[k];
            if (mu.size() != blk.z.size() + 2)
                throw InputError("residuals: cone dual dimension mismatch");
            station[blk.u] -= mu[0];
            station[blk.w] -= mu[1];
            double gg = 0.0;
            for (size_t r = 0; r < blk.z.size(); ++r) {
                station[blk.z[r]] -= mu[2 + r];
                gg += mu[2 + r] * mu[2 + r];
            }
            // dual cone of {uw >= |z|^2}: {4ab >= |g|^2, a,b >= 0}
            rep.dual_res =
                std::max({rep.dual_res, gg / 4.0 - mu[0] * mu[1], -mu[0], -mu[1]});
        }
    } else if (!prog.cones.empty()) {
        throw InputError("residuals: cone dual count mismatch");
    }
    for (double v : station) rep.dual_res = std::max(rep.dual_res, std::abs(v));

    double gap = 0.0;
    for (int j = 0; j < prog.num_vars; ++j) gap += prog.c[j] * x[j];
    for (int i = 0; i < prog.num_eq(); ++i) gap += prog.eq_rhs[i] * y_eq[i];
    for (int i = 0; i < prog.num_ineq(); ++i) gap += prog.ineq_rhs[i] * z_ineq[i];
    rep.gap = std::abs(gap);
    return rep;
}

// ---- diagnostic dump/load ----

std::string dump_program(const ConicProgram& prog, const std::vector<std::string>& var_names) {
    detail::ordered_json doc;
    doc["format"] = "gridflex-conic/1";
    doc["num_vars"] = prog.num_vars;
    doc["c"] = prog.c;
    auto rows_to_json = [](const std::vector<SparseRow>& rows, const std::vector<double>& rhs) {
        detail::ordered_json arr = detail::ordered_json::array();
        for (size_t i = 0; i < rows.size(); ++i) {
            detail::ordered_json jrow;
            jrow["coeffs"] = detail::ordered_json::array();
            for (auto [j, a] : rows[i]) jrow["coeffs"].push_back({j, a});
            jrow["rhs"] = rhs[i];
            arr.push_back(std::move(jrow));
        }
        return arr;
    };
    doc["eq"] = rows_to_json(prog.eq_rows, prog.eq_rhs);
    doc["ineq"] = rows_to_json(prog.ineq_rows, prog.ineq_rhs);
    doc["cones"] = detail::ordered_json::array();
    for (const ConeBlock& blk : prog.cones)
        doc["cones"].push_back({{"u", blk.u}, {"w", blk.w}, {"z", blk.z}});
    if (!var_names.empty()) doc["var_names"] = var_names;
    return doc.dump(1) + "\n";
}

ConicProgram load_program(const std::string& text) {
    const auto doc = detail::parse_json(text, "conic program dump");
    detail::require_keys(doc, {"format", "num_vars", "c", "eq", "ineq", "cones", "var_names"},
                         "conic program dump");
    if (detail::require_string(doc, "format", "dump") != "gridflex-conic/1")
        throw InputError("conic program dump: unsupported format");
    ConicProgram prog;
    prog.num_vars = static_cast<int>(detail::require_number(doc, "num_vars", "dump"));
    prog.c = doc.at("c").get<std::vector<double>>();
    auto rows_from_json = [](const detail::ordered_json& arr, std::vector<SparseRow>& rows,
                             std::vector<double>& rhs) {
        for (const auto& jrow : arr) {
            detail::require_keys(jrow, {"coeffs", "rhs"}, "dump row");
            SparseRow row;
            for (const auto& pair : jrow.at("coeffs"))
                row.push_back({pair.at(0).get<int>(), pair.at(1).get<double>()});
            rows.push_back(std::move(row));
            rhs.push_back(jrow.at("rhs").get<double>());
        }
    };
    rows_from_json(doc.at("eq"), prog.eq_rows, prog.eq_rhs);
    rows_from_json(doc.at("ineq"), prog.ineq_rows, prog.ineq_rhs);
    for (const auto& jblk : doc.at("cones")) {
        detail::require_keys(jblk, {"u", "w", "z"}, "dump cone");
        ConeBlock blk;
        blk.u = jblk.at("u").get<int>();
        blk.w = jblk.at("w").get<int>();
        blk.z = jblk.at("z").get<std::vector<int>>();
        prog.cones.push_back(std::move(blk));
    }
    prog.validate();
    return prog;
}

} // namespace gridflex::conic
