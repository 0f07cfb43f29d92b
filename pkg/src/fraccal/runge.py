"""Runge approximation by truncated SVD of the exterior-to-interior map.

The operator ``A`` sends exterior data ``f`` on one window to the Omega
values of the corresponding solution.  Its domain carries the discrete
H^s(W) Gram ``G`` and its codomain the lumped L^2_h mass, so the singular
system is computed in those inner products:

    A phi_k = sigma_k psi_k,   A^* psi_k = sigma_k phi_k,
    phi_j^T G phi_k = delta_jk,   h psi_j^T psi_k = delta_jk.

If zero is a Dirichlet eigenvalue, ``A`` is restricted to the admissible data
``H1`` and takes values in ``H2``; the kernel ``Z2`` is handled separately by
adding the ``Z2`` component of the target directly.

Window vectors in this module are *local* (one entry per node of the
window); Omega vectors have one entry per interior node of Omega.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import EmptyTarget, GramNotSPD, TargetUnreachable
from .fracgrid import FracOperator, Region, _region_key
from .forward import (KernelSpaces, Potential, _schrodinger, kernel_spaces,
                      poisson_matrix)

__all__ = [
    "RungeOperator",
    "SVDData",
    "ControlResult",
    "CostCurve",
    "DensityReport",
    "RANK_TOL",
    "MU_GRID",
    "assemble_A",
    "weighted_svd",
    "runge_control",
    "cost_curve",
    "density_check",
]

RANK_TOL = 1e-12
MU_GRID = (0.5, 1.0, 2.0, 4.0)
_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class RungeOperator:
    """Matrix of ``f -> (solution with exterior data f)|_Omega``.

    Attributes
    ----------
    A : ndarray, shape (n_omega, n_window)
        Acts on local window vectors.  In the kernel case ``A`` already
        contains the ``H1`` projector and the ``H2`` projection, so it is the
        zero map on the Gram complement of ``H1``.
    domain_basis : ndarray, shape (n_window, r)
        Columns orthonormal in ``domain_gram`` spanning the admissible data.
    domain_gram : ndarray
        Discrete H^s Gram of the window.
    codomain_mass : ndarray
        Diagonal of the L^2_h mass on Omega.
    """

    op: FracOperator = field(repr=False)
    q_ref: Potential = field(repr=False)
    W_ref: object
    A: np.ndarray
    domain_basis: np.ndarray
    domain_gram: np.ndarray
    codomain_mass: np.ndarray
    ks: Optional[KernelSpaces] = field(default=None, repr=False)

    @property
    def kernel(self) -> bool:
        return self.ks is not None and self.ks.dim > 0

    @property
    def shape(self):
        return self.A.shape

    def apply(self, f) -> np.ndarray:
        return self.A @ np.asarray(f, dtype=float)

    def adjoint(self, v) -> np.ndarray:
        """``A^*`` in the weighted inner products, through the dual problem.

        Solves ``(L + q) w = v`` in Omega (``H2`` representative in the
        kernel case) and returns ``-h G^{-1} (L w)|_W``, projected onto
        ``H1`` when needed.
        """
        op = self.op
        v = np.asarray(v, dtype=float)
        solver = _schrodinger(op, self.q_ref)
        if self.kernel:
            w = self.ks.project_h2(solver.solve_h2(self.ks.project_h2(v)))
        else:
            w = solver.solve(v)
        Lw = op.block(self.W_ref, "omega") @ w
        g = -op.h * linalg.cho_solve((op.hs_chol(self.W_ref), False), Lw)
        if self.kernel:
            g = self.ks.h1_projector(self.W_ref) @ g
        return g

    def domain_inner(self, f, g) -> float:
        return float(np.asarray(f) @ self.domain_gram @ np.asarray(g))

    def codomain_inner(self, u, v) -> float:
        return float(np.sum(self.codomain_mass * np.asarray(u) * np.asarray(v)))

    def window_extend(self, f_local) -> np.ndarray:
        """Zero-extend a local window vector to an active-node vector."""
        return self.op.lattice.extend(f_local, self.W_ref)


def assemble_A(op: FracOperator, q: Potential, ks: Optional[KernelSpaces] = None,
               region: Region = 0) -> RungeOperator:
    """Assemble the Runge operator for potential ``q`` and window ``region``.

    Passing ``ks`` with a nontrivial kernel selects the kernel setting.
    Without it the plain solve is used and :class:`NearSingular` is raised
    when zero is a Dirichlet eigenvalue.
    """
    lat = op.lattice
    n_omega = len(lat.omega_loc)
    if ks is not None and ks.dim > 0:
        P1 = ks.h1_projector(region)
        A = poisson_matrix(op, q, region, kernel=True) @ P1
        B = ks.h1_basis(region)
    else:
        A = poisson_matrix(op, q, region)
        R = op.hs_chol(region)
        B = linalg.solve_triangular(R, np.eye(R.shape[0]))
    return RungeOperator(
        op=op,
        q_ref=q,
        W_ref=_region_key(region),
        A=A,
        domain_basis=B,
        domain_gram=op.hs_gram(region),
        codomain_mass=np.full(n_omega, op.h),
        ks=ks,
    )


@dataclass(frozen=True, eq=False)
class SVDData:
    """Weighted singular system of a :class:`RungeOperator`.

    ``phis`` are local window vectors (columns), ``psis`` Omega vectors.
    """

    sigmas: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    runge: RungeOperator = field(repr=False)

    def __len__(self):
        return len(self.sigmas)

    def reconstruct(self) -> np.ndarray:
        """``sum_k sigma_k psi_k phi_k^T G``, which equals ``A``."""
        return (self.psis * self.sigmas) @ (self.phis.T @ self.runge.domain_gram)


def weighted_svd(R: RungeOperator) -> SVDData:
    """Singular system of ``A`` in the H^s(W) and L^2_h(Omega) inner products.

    The domain is whitened by a Gram-orthonormal basis obtained from the
    Cholesky factor of ``G`` (restricted to ``H1`` in the kernel case), the
    codomain by ``sqrt(h)``; a standard SVD of the whitened matrix is then
    mapped back.
    """
    try:
        np.linalg.cholesky(R.domain_gram)
    except np.linalg.LinAlgError as exc:
        raise GramNotSPD("domain Gram is not positive definite") from exc
    if np.any(R.codomain_mass <= 0):
        raise GramNotSPD("codomain mass must be positive")
    sq = np.sqrt(R.codomain_mass)
    B = R.domain_basis
    Aw = sq[:, None] * (R.A @ B)
    U, S, Vt = linalg.svd(Aw, full_matrices=False)
    keep = S > 0
    U, S, Vt = U[:, keep], S[keep], Vt[keep]
    return SVDData(sigmas=S, phis=B @ Vt.T, psis=U / sq[:, None], runge=R)


@dataclass(frozen=True)
class ControlResult:
    """Exterior control for one target.

    ``f`` is an active-node vector supported on the window and ``z`` the
    ``Z2`` part of the target on Omega.  ``eps_achieved`` is
    ``||A f + z - v||_{L^2} / ||v||_{L^2}`` and ``cost`` the H^s norm of ``f``,
    both evaluated on the returned vectors.
    """

    f: np.ndarray
    z: np.ndarray
    eps_achieved: float
    cost: float
    alpha_used: float
    n_modes: int
    f_local: np.ndarray = field(repr=False)
    approximation: np.ndarray = field(repr=False)


def _target_omega(R: RungeOperator, target) -> np.ndarray:
    lat = R.op.lattice
    v = np.asarray(target, dtype=float)
    if v.shape == (lat.n_active,):
        v = lat.check_support(v, "omega", "target")[lat.omega_loc]
    elif v.shape != (len(lat.omega_loc),):
        raise ValueError(f"target has shape {v.shape}")
    return v


class _Expansion:
    """Coefficients of a target in the codomain singular basis."""

    def __init__(self, svd: SVDData, target):
        R = svd.runge
        v = _target_omega(R, target)
        norm = np.sqrt(R.codomain_inner(v, v))
        if norm == 0.0:
            raise EmptyTarget("target vanishes identically")
        vt = R.ks.project_h2(v) if R.kernel else v
        if R.kernel and np.sqrt(R.codomain_inner(vt, vt)) <= _SNAP * norm:
            vt = np.zeros_like(v)  # pure Z2 target; projection roundoff only
        self.v, self.vt, self.z, self.norm = v, vt, v - vt, norm
        self.beta = R.codomain_mass[0] * (svd.psis.T @ vt)
        perp = vt - svd.psis @ self.beta
        perp2 = R.codomain_inner(perp, perp)
        # residual[k] = ||vt - sum_{j<k} beta_j psi_j|| / ||v||, nonincreasing in k
        tail = np.concatenate([np.cumsum((self.beta**2)[::-1])[::-1], [0.0]])
        self.residual = np.sqrt(perp2 + tail) / norm


def _control(svd: SVDData, ex: _Expansion, n_modes: int, alpha: float) -> ControlResult:
    R = svd.runge
    sig = svd.sigmas[:n_modes]
    f_loc = svd.phis[:, :n_modes] @ (ex.beta[:n_modes] / sig)
    Af = R.apply(f_loc)
    err = Af + ex.z - ex.v
    eps = np.sqrt(R.codomain_inner(err, err)) / ex.norm
    cost = np.sqrt(max(R.domain_inner(f_loc, f_loc), 0.0))
    lat = R.op.lattice
    return ControlResult(
        f=R.window_extend(f_loc),
        z=lat.extend(ex.z, "omega"),
        eps_achieved=float(eps),
        cost=float(cost),
        alpha_used=float(alpha),
        n_modes=int(n_modes),
        f_local=f_loc,
        approximation=Af,
    )


def runge_control(svd: SVDData, target, *, alpha: float = None,
                  eps: float = None) -> ControlResult:
    """Truncated-SVD control ``f = sum_{sigma_j >= alpha} (beta_j / sigma_j) phi_j``.

    Exactly one of ``alpha`` (fixed threshold) and ``eps`` (relative L^2
    error) must be given.  With ``eps`` the threshold is the largest value on
    the singular value ladder whose truncation meets the error, found by
    bisection.

    Raises
    ------
    EmptyTarget
        If the target is zero.
    TargetUnreachable
        If ``eps`` is below the error of the full expansion.
    """
    if (alpha is None) == (eps is None):
        raise ValueError("give exactly one of alpha and eps")
    ex = _Expansion(svd, target)
    sig = svd.sigmas
    if alpha is not None:
        n = int(np.sum(sig >= alpha))
        return _control(svd, ex, n, alpha)

    res = ex.residual
    if res[-1] > eps:
        raise TargetUnreachable(
            f"requested eps={eps:.3e} is below the floor {res[-1]:.3e} of the "
            f"full expansion ({len(sig)} modes)")
    lo, hi = 0, len(sig)  # res[hi] <= eps; find the smallest such index
    while lo < hi:
        mid = (lo + hi) // 2
        if res[mid] <= eps:
            hi = mid
        else:
            lo = mid + 1
    if lo == 0:
        return _control(svd, ex, 0, float(sig[0]) * 2.0 if len(sig) else np.inf)
    a = sig[lo - 1]
    return _control(svd, ex, int(np.sum(sig >= a)), a)


@dataclass(frozen=True)
class CostCurve:
    """Error and cost of the truncated-SVD control along a list of thresholds.

    ``fits`` maps each candidate exponent ``mu`` to ``(slope, intercept, r2)``
    of the least-squares line of ``log(cost)`` against ``eps**-mu``, taken
    over the points with positive error and cost.
    """

    alpha: np.ndarray
    eps: np.ndarray
    cost: np.ndarray
    n_modes: np.ndarray
    fits: dict

    def as_columns(self) -> dict:
        return {"alpha": self.alpha, "eps": self.eps, "cost": self.cost,
                "n_modes": self.n_modes.astype(float)}


def _linfit(x, y):
    if len(x) < 2 or np.ptp(x) == 0:
        return (np.nan, np.nan, np.nan)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else np.nan
    return (float(slope), float(icpt), float(r2))


def cost_curve(svd: SVDData, target, alphas: Sequence[float],
               mus: Sequence[float] = MU_GRID) -> CostCurve:
    """Sweep ``runge_control`` over descending thresholds ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0) or np.any(np.diff(alphas) > 0):
        raise ValueError("alphas must be positive and descending")
    ex = _Expansion(svd, target)
    rows = [_control(svd, ex, int(np.sum(svd.sigmas >= a)), a) for a in alphas]
    eps = np.array([r.eps_achieved for r in rows])
    cost = np.array([r.cost for r in rows])
    good = (eps > 0) & (cost > 0)
    fits = {float(mu): _linfit(eps[good] ** (-mu), np.log(cost[good])) for mu in mus}
    return CostCurve(alpha=alphas, eps=eps, cost=cost,
                     n_modes=np.array([r.n_modes for r in rows]), fits=fits)


@dataclass(frozen=True)
class DensityReport:
    rank: int
    n_omega: int
    n_window: int
    kernel_dim: int
    singular_values: np.ndarray
    threshold: float

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n_omega


def density_check(R: RungeOperator, ks: Optional[KernelSpaces] = None,
                  tol: float = RANK_TOL) -> DensityReport:
    """Numerical rank of ``[A | Z2]`` in L^2_h(Omega) at threshold ``tol * sigma_1``."""
    if ks is None:
        ks = R.ks if R.ks is not None else kernel_spaces(R.op, R.q_ref)
    X = np.hstack([R.A, ks.Z2]) if ks.dim else R.A
    S = linalg.svd(np.sqrt(R.op.h) * X, compute_uv=False)
    thr = tol * S[0] if S.size else 0.0
    return DensityReport(
        rank=int(np.sum(S > thr)),
        n_omega=R.A.shape[0],
        n_window=R.A.shape[1],
        kernel_dim=ks.dim,
        singular_values=S,
        threshold=float(thr),
    )
