"""Exterior-value fractional Schrödinger problem and its measurement maps.

For a potential ``q`` on Omega the discrete problem reads

    (L u)_i + q_i u_i = F_i   for i in Omega,     u = f on the windows,

with ``u`` identically zero everywhere else.  Eliminating the exterior values
leaves the symmetric matrix ``K_q = L_{Omega Omega} + diag(q)``.  All solves
go through one symmetric eigendecomposition of ``K_q`` which also provides
the Dirichlet spectrum, the kernel ``Z2`` and the ``H2`` representative.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import (GramMismatch, IncompatibleData, NearSingular,
                     SupportViolation)
from .fracgrid import FracOperator, Region, _region_key

__all__ = [
    "Potential",
    "Spectrum",
    "KernelSpaces",
    "DtNMatrix",
    "CauchyBasis",
    "dirichlet_spectrum",
    "kernel_spaces",
    "solve_forward",
    "solve_forward_kernel",
    "poisson_matrix",
    "dtn_matrix",
    "dtn_difference",
    "alessandrini_gap",
    "cauchy_data",
    "cauchy_basis",
    "cauchy_distance",
    "cauchy_alessandrini",
    "cauchy_pairing",
    "whitened_dtn",
]

ZERO_TOL = 1e-8
_CACHE_SIZE = 128


@dataclass(frozen=True, eq=False)
class Potential:
    """Potential ``q`` sampled at the interior nodes of Omega.

    ``span`` and ``coeffs`` are set when ``q`` was built from a
    :class:`~fraccal.inverse.PotentialSpan`.
    """

    values: np.ndarray
    sup_bound: float = None
    span: object = None
    coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        sup = float(np.max(np.abs(values))) if values.size else 0.0
        if self.sup_bound is None:
            object.__setattr__(self, "sup_bound", sup)
        elif sup > self.sup_bound * (1 + 1e-12):
            raise ValueError(f"max |q| = {sup} exceeds sup_bound = {self.sup_bound}")

    @classmethod
    def zero(cls, op: FracOperator) -> "Potential":
        return cls(np.zeros(len(op.lattice.omega_loc)))

    @classmethod
    def constant(cls, op: FracOperator, c: float) -> "Potential":
        return cls(np.full(len(op.lattice.omega_loc), float(c)))

    def shifted(self, c: float) -> "Potential":
        return Potential(self.values + c)

    def __add__(self, other):
        other = other.values if isinstance(other, Potential) else other
        return Potential(self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, Potential) else other
        return Potential(self.values - other)


@dataclass(frozen=True)
class Spectrum:
    """Dirichlet spectrum of ``K_q``; eigenvectors are L^2_h-orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_tol: float

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def kernel_mask(self) -> np.ndarray:
        return np.abs(self.eigenvalues) <= self.zero_tol

    @property
    def near_singular(self) -> bool:
        return bool(np.any(self.kernel_mask))


class _Schrodinger:
    """Eigendecomposition of ``K_q`` shared by every solve with potential ``q``."""

    def __init__(self, op: FracOperator, q: Potential):
        lat = op.lattice
        K = op.block("omega", "omega") + np.diag(q.values)
        lam, V = linalg.eigh(K)
        self.K = K
        self.lam = lam
        self.V = V
        self.norm = float(np.max(np.abs(lam)))
        self.zero_tol = ZERO_TOL * self.norm
        self.kernel = np.abs(lam) <= self.zero_tol
        self.h = lat.h

    def spectrum(self) -> Spectrum:
        return Spectrum(self.lam.copy(), self.V / np.sqrt(self.h), self.zero_tol)

    def solve(self, rhs) -> np.ndarray:
        if np.any(self.kernel):
            raise NearSingular(
                f"zero is a discrete Dirichlet eigenvalue (|lambda| = "
                f"{np.min(np.abs(self.lam)):.3e} <= {self.zero_tol:.3e})")
        return self.V @ ((self.V.T @ rhs) / _col(self.lam, rhs))

    def solve_h2(self, rhs) -> np.ndarray:
        """Minimum-norm solve on the complement of the kernel."""
        inv = np.where(self.kernel, 0.0, 1.0 / np.where(self.kernel, 1.0, self.lam))
        return self.V @ ((self.V.T @ rhs) * _col(inv, rhs))

    def kernel_basis(self) -> np.ndarray:
        return self.V[:, self.kernel] / np.sqrt(self.h)


def _col(vec, rhs):
    return vec[:, None] if np.ndim(rhs) == 2 else vec


def _schrodinger(op: FracOperator, q: Potential) -> _Schrodinger:
    cache = op._cache.setdefault("schrodinger", OrderedDict())
    key = q.values.tobytes()
    hit = cache.get(key)
    if hit is not None:
        cache.move_to_end(key)
        return hit
    solver = _Schrodinger(op, q)
    cache[key] = solver
    if len(cache) > _CACHE_SIZE:
        cache.popitem(last=False)
    return solver


def dirichlet_spectrum(op: FracOperator, q: Potential) -> Spectrum:
    """Ascending Dirichlet eigenvalues of ``L_{Omega Omega} + diag(q)``."""
    return _schrodinger(op, q).spectrum()


@dataclass(frozen=True, eq=False)
class KernelSpaces:
    """Kernel ``Z2`` of ``K_q`` and the projectors onto ``H1`` and ``H2``.

    ``Z2`` holds L^2_h-orthonormal columns on Omega.  ``H1`` (admissible
    exterior data ``y`` with ``(y, (L z)|_W)_W = 0`` for all ``z`` in ``Z2``)
    depends on the window, so its projector and a Gram-orthonormal basis are
    produced per region by :meth:`h1_projector` and :meth:`h1_basis`.
    """

    op: FracOperator
    q: Potential
    Z2: np.ndarray
    H2_projector: np.ndarray
    zero_tol: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.Z2.shape[1]

    def constraints(self, region: Region) -> np.ndarray:
        """Columns ``(L z)|_W`` for the kernel basis ``z``."""
        return self.op.block(region, "omega") @ self.Z2

    def h1_basis(self, region: Region) -> np.ndarray:
        """Columns orthonormal in the H^s(W) Gram spanning ``H1`` on ``region``."""
        key = ("basis", _region_key(region))
        if key not in self._cache:
            R = self.op.hs_chol(region)
            n = R.shape[0]
            if self.dim == 0:
                N = np.eye(n)
            else:
                C = self.constraints(region)
                Cw = linalg.solve_triangular(R, C, trans="T")
                N = linalg.null_space(Cw.T)
            self._cache[key] = linalg.solve_triangular(R, N)
        return self._cache[key]

    def h1_projector(self, region: Region) -> np.ndarray:
        """Gram-orthogonal projector onto ``H1`` in window coordinates."""
        key = ("proj", _region_key(region))
        if key not in self._cache:
            B = self.h1_basis(region)
            G = self.op.hs_gram(region)
            self._cache[key] = B @ (B.T @ G)
        return self._cache[key]

    def project_h2(self, v_omega) -> np.ndarray:
        return self.H2_projector @ v_omega

    def project_z2(self, v_omega) -> np.ndarray:
        return v_omega - self.H2_projector @ v_omega


def kernel_spaces(op: FracOperator, q: Potential) -> KernelSpaces:
    solver = _schrodinger(op, q)
    Z = solver.kernel_basis()
    n = Z.shape[0]
    P2 = np.eye(n) - op.h * (Z @ Z.T)
    return KernelSpaces(op=op, q=q, Z2=Z, H2_projector=P2, zero_tol=solver.zero_tol)


def _exterior_part(op, f):
    lat = op.lattice
    f = np.asarray(f, dtype=float)
    if f.shape != (lat.n_active,):
        raise SupportViolation(f"exterior datum has shape {f.shape}, expected ({lat.n_active},)")
    if np.any(f[lat.omega_loc] != 0.0):
        raise SupportViolation("exterior datum must vanish on Omega")
    return f


def solve_forward(op: FracOperator, q: Potential, f) -> np.ndarray:
    """Solve ``(L + q) u = 0`` in Omega with ``u = f`` on the windows.

    Raises :class:`NearSingular` when zero is a discrete Dirichlet
    eigenvalue within tolerance.
    """
    lat = op.lattice
    f = _exterior_part(op, f)
    ext = lat.loc("exterior")
    rhs = -op.L[np.ix_(lat.omega_loc, ext)] @ f[ext]
    u = f.copy()
    u[lat.omega_loc] = _schrodinger(op, q).solve(rhs)
    return u


def solve_forward_kernel(op: FracOperator, q: Potential, ks: KernelSpaces,
                         f, F=None, tol: float = 1e-8) -> np.ndarray:
    """Solve ``(L + q) u = F`` in Omega, ``u = f`` outside, in the kernel case.

    Solvable iff ``(F, z)_Omega - (f, (L z)|_W)_W = 0`` for every ``z`` in
    ``Z2``; the returned solution has its Omega part in ``H2``.
    """
    lat = op.lattice
    f = _exterior_part(op, f)
    nO = len(lat.omega_loc)
    F = np.zeros(nO) if F is None else np.asarray(F, dtype=float)
    ext = lat.loc("exterior")
    Lof = op.L[np.ix_(lat.omega_loc, ext)] @ f[ext]
    if ks.dim:
        h = op.h
        res = h * (ks.Z2.T @ F) - h * (ks.Z2.T @ Lof)
        scale = np.sqrt(h) * (np.linalg.norm(F) + np.linalg.norm(Lof))
        if np.any(np.abs(res) > tol * scale):
            raise IncompatibleData(
                f"solvability residual {np.max(np.abs(res)):.3e} exceeds tolerance")
    u = f.copy()
    u[lat.omega_loc] = ks.project_h2(_schrodinger(op, q).solve_h2(F - Lof))
    return u


def poisson_matrix(op: FracOperator, q: Potential, region: Region,
                   kernel: bool = False) -> np.ndarray:
    """Omega values of the solutions for nodal data on ``region`` (one column each).

    With ``kernel=True`` the columns are the ``H2`` representatives; they are
    solutions only for data in ``H1``.
    """
    Lof = op.block("omega", region)
    solver = _schrodinger(op, q)
    if kernel:
        U = -solver.solve_h2(Lof)
        Z = solver.kernel_basis()
        return U - Z @ (op.h * (Z.T @ U))
    return -solver.solve(Lof)


@dataclass(frozen=True, eq=False)
class DtNMatrix:
    """Discrete DtN map from data on ``from_region`` to densities on ``to_region``.

    ``entries @ f_from`` is ``(L u_f)|_to``; the pairing with ``g`` on
    ``to_region`` is ``h * g @ entries @ f``.
    """

    entries: np.ndarray
    from_region: object
    to_region: object
    q_ref: Potential

    def __matmul__(self, other):
        return self.entries @ other

    def __sub__(self, other: "DtNMatrix") -> np.ndarray:
        return self.entries - other.entries


def dtn_matrix(op: FracOperator, q: Potential, from_k: Region = 0,
               to_k: Region = 0) -> DtNMatrix:
    """Block-algebra DtN ``L_{to,from} + L_{to,Omega} U`` with ``U`` the Poisson block."""
    U = poisson_matrix(op, q, from_k)
    Lam = op.block(to_k, from_k) + op.block(to_k, "omega") @ U
    if _region_key(from_k) == _region_key(to_k):
        Lam = 0.5 * (Lam + Lam.T)
    return DtNMatrix(Lam, from_k, to_k, q)


def dtn_difference(op: FracOperator, q1: Potential, q2: Potential,
                   from_k: Region = 0, to_k: Region = 0) -> np.ndarray:
    """``Lambda_{q1} - Lambda_{q2}`` without cancellation.

    Uses ``Lambda_1 - Lambda_2 = V_2^T diag(q1 - q2) U_1`` where ``U_1`` and
    ``V_2`` are Poisson blocks of ``q1`` on ``from_k`` and of ``q2`` on
    ``to_k``; the same block algebra as the discrete Alessandrini identity.
    """
    U1 = poisson_matrix(op, q1, from_k)
    V2 = poisson_matrix(op, q2, to_k)
    dq = q1.values - q2.values
    return V2.T @ (dq[:, None] * U1)


def whitened_dtn(op: FracOperator, M: np.ndarray, from_k: Region,
                 to_k: Region) -> np.ndarray:
    """Matrix of the bilinear form ``(M f1, f2)_to`` in H^s-orthonormal coordinates.

    Its largest singular value is the operator norm sup over unit H^s data.
    """
    R1 = op.hs_chol(from_k)
    R2 = op.hs_chol(to_k)
    X = linalg.solve_triangular(R1, M.T, trans="T").T
    return op.h * linalg.solve_triangular(R2, X, trans="T")


def alessandrini_gap(op: FracOperator, q1: Potential, q2: Potential, f1, f2,
                     from_k: Region = 0, to_k: Region = 1):
    """Both sides of ``((q1 - q2) u1, u2)_Omega = ((Lambda_1 - Lambda_2) f1, f2)_W``.

    ``lhs`` pairs the two forward solutions inside Omega, ``rhs`` subtracts
    the two assembled DtN matrices; the two are exactly equal in exact
    arithmetic.
    """
    lat = op.lattice
    f1 = lat.check_support(f1, from_k, "f1")
    f2 = lat.check_support(f2, to_k, "f2")
    u1 = solve_forward(op, q1, f1)
    u2 = solve_forward(op, q2, f2)
    om = lat.omega_loc
    lhs = op.h * float(np.sum((q1.values - q2.values) * u1[om] * u2[om]))
    D = dtn_matrix(op, q1, from_k, to_k) - dtn_matrix(op, q2, from_k, to_k)
    rhs = op.h * float(lat.restrict(f2, to_k) @ D @ lat.restrict(f1, from_k))
    return lhs, rhs


def cauchy_data(op: FracOperator, u, region: Region) -> np.ndarray:
    """Stack ``(u|_W, (L u)|_W)`` on ``region``."""
    lat = op.lattice
    loc = lat.loc(region)
    return np.concatenate([np.asarray(u)[loc], (op.L @ u)[loc]])


@dataclass(frozen=True, eq=False)
class CauchyBasis:
    """H-orthonormal basis of the discrete Cauchy data subspace on ``region``.

    ``columns`` are stacked ``(u|_W, (L u)|_W)`` vectors; ``white`` are the
    same vectors in coordinates where the H inner product is Euclidean.
    ``n_admissible`` is the dimension of the admissible exterior data ``H1``.
    """

    columns: np.ndarray
    white: np.ndarray
    H_gram: np.ndarray
    region: object
    n_admissible: int
    op: FracOperator = field(repr=False)

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def whiten(self, X) -> np.ndarray:
        return _h_whiten(self.op, self.region, X)

    def project(self, X) -> np.ndarray:
        """H-orthogonal projection of stacked Cauchy vectors onto this subspace."""
        Y = self.whiten(X)
        coef = self.white.T @ Y
        return self.columns @ coef


def _h_whiten(op, region, X):
    R = op.hs_chol(region)
    n = R.shape[0]
    X = np.asarray(X, dtype=float)
    top, bot = X[:n], X[n:]
    return np.concatenate([R @ top, op.h * linalg.solve_triangular(R, bot, trans="T")])


def _h_unwhiten(op, region, Y):
    R = op.hs_chol(region)
    n = R.shape[0]
    top, bot = Y[:n], Y[n:]
    return np.concatenate([linalg.solve_triangular(R, top), (R.T @ bot) / op.h])


def h_gram(op: FracOperator, region: Region) -> np.ndarray:
    """Block Gram ``diag(G, h^2 G^{-1})`` of the squared H norm."""
    G = op.hs_gram(region)
    n = len(G)
    Ginv = linalg.cho_solve((op.hs_chol(region), False), np.eye(n))
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = G
    H[n:, n:] = op.h**2 * Ginv
    return H


def cauchy_basis(op: FracOperator, q: Potential, ks: Optional[KernelSpaces] = None,
                 region: Region = 0) -> CauchyBasis:
    """Orthonormal basis of ``{(u|_W, (L u)|_W) : u solves with data on W}``.

    In the kernel case the admissible data are restricted to ``H1`` and the
    solutions ``z`` in ``Z2`` (zero exterior data) contribute the extra
    directions ``(0, (L z)|_W)``.
    """
    if ks is None:
        ks = kernel_spaces(op, q)
    B = ks.h1_basis(region)
    U = poisson_matrix(op, q, region, kernel=ks.dim > 0) @ B
    top = B
    bot = op.block(region, region) @ B + op.block(region, "omega") @ U
    X = np.vstack([top, bot])
    if ks.dim:
        Xz = np.vstack([np.zeros((B.shape[0], ks.dim)), ks.constraints(region)])
        X = np.hstack([X, Xz])
    Q, _ = linalg.qr(_h_whiten(op, region, X), mode="economic")
    return CauchyBasis(
        columns=_h_unwhiten(op, region, Q),
        white=Q,
        H_gram=h_gram(op, region),
        region=_region_key(region),
        n_admissible=B.shape[1],
        op=op,
    )


def _directed_gap(Qa, Qb):
    """sup over unit h in span(Qb) of the distance to span(Qa)."""
    R = Qb - Qa @ (Qa.T @ Qb)
    return float(np.linalg.norm(R, 2)) if R.size else 0.0


def cauchy_distance(C1: CauchyBasis, C2: CauchyBasis) -> float:
    """Aperture ``max(gap(C2 -> C1), gap(C1 -> C2))`` in the H norm, in [0, 1]."""
    if (C1.region != C2.region or C1.H_gram.shape != C2.H_gram.shape
            or not np.allclose(C1.H_gram, C2.H_gram, rtol=1e-12, atol=0.0)):
        raise GramMismatch("Cauchy bases live on different windows or H Grams")
    d = max(_directed_gap(C1.white, C2.white), _directed_gap(C2.white, C1.white))
    return min(d, 1.0)


def cauchy_alessandrini(op: FracOperator, u1, u2, v2, region: Region):
    """Right-hand side of the Cauchy-data Alessandrini identity on ``region``.

    Returns ``((L (u1 - v2))|_W, u2|_W)_W - ((L u2)|_W, (u1 - v2)|_W)_W``
    computed from exterior Cauchy data only; ``u1`` solves with ``q1`` and
    ``u2``, ``v2`` with ``q2``.  By the symmetry of ``L`` it equals
    ``((q1 - q2) u1, u2)_Omega`` for any such ``v2``.
    """
    loc = op.lattice.loc(region)
    c1 = cauchy_data(op, u1, region)
    c2 = cauchy_data(op, u2, region)
    cv = cauchy_data(op, v2, region)
    n = len(loc)
    return cauchy_pairing(op.h, n, c1 - cv, c2)


def cauchy_pairing(h, n, d, c2) -> float:
    """``h ((L d)|_W . u2|_W - (L u2)|_W . d|_W)`` from stacked Cauchy vectors."""
    return h * float(d[n:] @ c2[:n] - c2[n:] @ d[:n])
