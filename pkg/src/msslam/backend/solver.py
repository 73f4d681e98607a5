"""Levenberg-Marquardt over the whitened residuals of a factor graph.

Residuals and Jacobians are evaluated per factor kind in batches and
assembled into a sparse system. Hard-fixed key poses are left out of the
state vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from msslam.backend import factors as F
from msslam.errors import SingularSystem, ZeroRange
from msslam.geometry import Pose, shape_from_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50
    lambda_init: float = 1e-4
    lambda_max: float = 1e10
    convergence_tol: float = 1e-10
    jacobian: str = "analytic"

    def __post_init__(self):
        if self.jacobian not in ("analytic", "numeric"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.max_iters < 0 or self.lambda_init <= 0:
            raise ValueError("max_iters must be >= 0 and lambda_init > 0")


@dataclass
class OptimizeResult:
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)


PARAM_DIM = {"cuboid": 9, "cylinder": 7, "ellipsoid": 5}


class _Problem:
    """Stacked variables and factors of a graph, frozen at construction."""

    def __init__(self, graph, jacobian: str):
        self.jacobian = jacobian
        kps = graph.key_poses
        self.R = np.array([k.estimate.rotation for k in kps]).reshape(-1, 3, 3)
        self.t = np.array([k.estimate.translation for k in kps]).reshape(-1, 3)
        col = np.full(len(kps), -1)
        n = 0
        for k in kps:
            if not k.fixed:
                col[k.id] = n
                n += 6
        self.pose_col = col

        # landmarks grouped by kind
        self.lm_kind: dict[int, tuple[str, int]] = {}
        self.lm_ids = {k: [] for k in F.LANDMARK_LOCAL_DIM}
        for lid in sorted(graph.landmarks):
            kind = graph.landmarks[lid].shape.kind
            self.lm_kind[lid] = (kind, len(self.lm_ids[kind]))
            self.lm_ids[kind].append(lid)
        self.lm_params = {}
        self.lm_col = {}
        for kind, ids in self.lm_ids.items():
            dim = F.LANDMARK_LOCAL_DIM[kind]
            self.lm_params[kind] = np.array([graph.landmarks[i].shape.params for i in ids],
                                            dtype=float).reshape(len(ids), PARAM_DIM[kind])
            self.lm_col[kind] = n + dim * np.arange(len(ids))
            n += dim * len(ids)
        self.n = n

        groups: dict[str, list] = {k: [] for k in F.RESIDUAL_DIM}
        for f in graph.factors:
            groups[f.kind].append(f)
        self.groups = {}
        row = 0
        for kind, fs in groups.items():
            if not fs:
                continue
            m = F.RESIDUAL_DIM[kind]
            var = np.array([f.variables for f in fs], dtype=int)
            meas = np.array([f.measurement for f in fs], dtype=float)
            w = np.array([f.weights for f in fs], dtype=float)
            g = {"var": var, "w": w, "row": row + m * np.arange(len(fs))}
            if kind in ("odometry", "prior"):
                g["Rm"] = meas[:, :9].reshape(-1, 3, 3)
                g["tm"] = meas[:, 9:12]
            else:
                g["meas"] = meas
                g["lrow"] = np.array([self.lm_kind[v][1] for v in var[:, 1]], dtype=int)
            self.groups[kind] = g
            row += m * len(fs)
        self.m = row

    # -- evaluation ------------------------------------------------------------

    def residuals(self, R, t, lm_params, with_jac: bool):
        r = np.zeros(self.m)
        rows, cols, vals = [], [], []

        def put(g, J, var_cols, local):
            if not with_jac:
                return
            ok = var_cols >= 0
            if not ok.any():
                return
            n, m = J.shape[0], J.shape[1]
            rr = g["row"][ok][:, None, None] + np.arange(m)[None, :, None]
            cc = var_cols[ok][:, None, None] + np.arange(local)[None, None, :]
            rows.append(np.broadcast_to(rr, (ok.sum(), m, local)).ravel())
            cols.append(np.broadcast_to(cc, (ok.sum(), m, local)).ravel())
            vals.append((g["w"][ok][:, :, None] * J[ok]).ravel())

        numeric = self.jacobian == "numeric"
        for kind, g in self.groups.items():
            var = g["var"]
            m = F.RESIDUAL_DIM[kind]
            if kind == "prior":
                i = var[:, 0]
                if with_jac and numeric:
                    e, J = F.numeric_prior_jacobian(R[i], t[i], g["Rm"], g["tm"])
                else:
                    e, J = F.prior_batch(R[i], t[i], g["Rm"], g["tm"])
                put(g, J, self.pose_col[i], 6)
            elif kind == "odometry":
                i, j = var[:, 0], var[:, 1]
                if with_jac and numeric:
                    e, Jp, Jc = F.numeric_odometry_jacobians(R[i], t[i], R[j], t[j], g["Rm"], g["tm"])
                else:
                    e, Jp, Jc = F.odometry_batch(R[i], t[i], R[j], t[j], g["Rm"], g["tm"])
                put(g, Jp, self.pose_col[i], 6)
                put(g, Jc, self.pose_col[j], 6)
            else:
                i = var[:, 0]
                lm = lm_params[kind][g["lrow"]]
                if with_jac and numeric:
                    e, Jx, Jl = F.numeric_landmark_jacobians(kind, R[i], t[i], lm, g["meas"])
                else:
                    e, Jx, Jl = F.LANDMARK_KERNELS[kind](R[i], t[i], lm, g["meas"])
                put(g, Jx, self.pose_col[i], 6)
                put(g, Jl, self.lm_col[kind][g["lrow"]], F.LANDMARK_LOCAL_DIM[kind])
            idx = g["row"][:, None] + np.arange(m)[None, :]
            r[idx.ravel()] = (g["w"] * e).ravel()
        if not with_jac:
            return r, None
        if rows:
            J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.m, self.n)).tocsr()
        else:
            J = sp.csr_matrix((self.m, self.n))
        return r, J

    def retract(self, R, t, lm_params, delta):
        R2, t2 = R.copy(), t.copy()
        free = self.pose_col >= 0
        if free.any():
            d = delta[self.pose_col[free][:, None] + np.arange(6)[None, :]]
            R2[free], t2[free] = F.retract_pose(R[free], t[free], d)
        lm2 = {}
        for kind, p in lm_params.items():
            if not len(p):
                lm2[kind] = p
                continue
            dim = F.LANDMARK_LOCAL_DIM[kind]
            d = delta[self.lm_col[kind][:, None] + np.arange(dim)[None, :]]
            lm2[kind] = F.retract_landmark(kind, p, d)
        return R2, t2, lm2


def check_anchored(graph):
    """Every connected component must contain a fixed pose or a prior factor."""
    n_kp = len(graph.key_poses)
    lids = {lid: n_kp + i for i, lid in enumerate(sorted(graph.landmarks))}
    parent = list(range(n_kp + len(lids)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    anchored = set()
    for f in graph.factors:
        if f.kind == "prior":
            anchored.add(f.variables[0])
        elif f.kind == "odometry":
            parent[find(f.variables[0])] = find(f.variables[1])
        else:
            parent[find(f.variables[0])] = find(lids[f.variables[1]])
    anchored |= {k.id for k in graph.key_poses if k.fixed}
    roots = {find(a) for a in anchored}
    for v in range(len(parent)):
        if find(v) not in roots:
            raise SingularSystem(f"variable {v} belongs to a component with no anchored pose")


def _cost(r) -> float:
    return 0.5 * float(r @ r)


def optimize(graph, config: SolverConfig | None = None) -> OptimizeResult:
    """Run LM on ``graph`` in place and return the cost trace.

    Raises :class:`SingularSystem` when the damped normal equations cannot be
    solved or a component of the graph has no anchor.
    """
    cfg = config or SolverConfig()
    with graph.lock:
        if not graph.factors:
            return OptimizeResult(0.0, 0.0, 0, True, [0.0])
        check_anchored(graph)
        prob = _Problem(graph, cfg.jacobian)
        R, t, lm = prob.R, prob.t, prob.lm_params
        r, J = prob.residuals(R, t, lm, True)
        cost = _cost(r)
        history = [cost]
        lam = cfg.lambda_init
        converged = False
        it = 0
        while it < cfg.max_iters and prob.n:
            it += 1
            A = (J.T @ J).tocsc()
            g = J.T @ r
            diag = np.maximum(A.diagonal(), 1e-9)
            accepted = False
            while lam <= cfg.lambda_max:
                M = A + sp.diags(lam * diag, format="csc")
                try:
                    delta = spla.spsolve(M, -g, permc_spec="MMD_AT_PLUS_A")
                except (RuntimeError, ValueError) as exc:
                    raise SingularSystem(str(exc)) from exc
                if not np.all(np.isfinite(delta)):
                    lam *= 10.0
                    continue
                R2, t2, lm2 = prob.retract(R, t, lm, delta)
                try:
                    r2, _ = prob.residuals(R2, t2, lm2, False)
                except ZeroRange:
                    lam *= 10.0
                    continue
                c2 = _cost(r2)
                if np.isfinite(c2) and c2 < cost:
                    accepted = True
                    break
                lam *= 10.0
            if not accepted:
                if not np.isfinite(cost):
                    raise SingularSystem("no finite step found")
                converged = True
                break
            decrease = (cost - c2) / max(cost, 1e-300)
            R, t, lm = R2, t2, lm2
            cost = c2
            history.append(cost)
            lam = max(lam / 10.0, 1e-12)
            if decrease < cfg.convergence_tol or cost < 1e-30:
                converged = True
                break
            r, J = prob.residuals(R, t, lm, True)
        poses = {k: Pose(R[k], t[k]) for k in range(len(R)) if prob.pose_col[k] >= 0}
        shapes = {}
        for kind, ids in prob.lm_ids.items():
            for row, lid in enumerate(ids):
                shapes[lid] = shape_from_params(kind, lm[kind][row])
        graph.set_estimates(poses, shapes)
        log.debug("optimize: %d iterations, cost %.6g -> %.6g", it, history[0], cost)
        return OptimizeResult(history[0], cost, it, converged, history)


__all__ = ["OptimizeResult", "SolverConfig", "check_anchored", "optimize"]
