"""Uniform 1D lattice and the dense discrete fractional Laplacian.

Lattice functions are plain ``numpy`` vectors indexed by the *active* nodes
(the interior nodes of Omega and of every exterior window, in ascending
coordinate order).  Every admissible function vanishes identically outside
Omega and the windows, which is what makes the zero extension used by the
quadrature exact.

The quadrature is a collocation scheme: the integrand of

    (-Delta)^s u(x) = c_{1,s} PV int (u(x) - u(y)) |x - y|^{-1-2s} dy

is replaced by a second-order Taylor model on ``|x - y| < h`` and by the
piecewise-linear interpolant of ``u`` beyond, where the tail over the region
in which ``u`` vanishes is integrated exactly.  All of it collapses to a
Toeplitz sequence ``mu_0, mu_1, ...`` so ``L_ij = -mu_|i-j|`` off the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import gamma

from .errors import (EmptyRegion, EndpointNotAligned, GramNotSPD,
                     InvalidOrder, RegionsTouch, SupportViolation)

__all__ = [
    "Lattice",
    "FracOperator",
    "build_lattice",
    "assemble_operator",
    "fractional_constant",
    "toeplitz_weights",
    "l2_inner",
    "hs_norm",
    "hminus_norm",
]

Region = Union[str, int, Sequence[int]]

_ALIGN_TOL = 1e-9


def _to_units(value, h):
    q = value / h
    k = int(round(q))
    if abs(q - k) > _ALIGN_TOL * max(1.0, abs(q)):
        raise EndpointNotAligned(f"endpoint {value!r} is not a multiple of h={h!r}")
    return k


@dataclass(frozen=True)
class Lattice:
    """Global grid on the hull of Omega and the exterior windows.

    ``omega_idx`` and ``w_idx[k]`` hold *global* node indices (into
    ``nodes``); ``omega_loc`` and ``w_loc[k]`` hold the matching positions
    inside an active-node vector.
    """

    h: float
    left: float
    right: float
    nodes: np.ndarray
    omega: tuple
    windows: tuple
    omega_idx: np.ndarray
    w_idx: tuple
    active_idx: np.ndarray
    omega_loc: np.ndarray
    w_loc: tuple

    @property
    def n_active(self) -> int:
        return len(self.active_idx)

    @property
    def x(self) -> np.ndarray:
        """Coordinates of the active nodes."""
        return self.nodes[self.active_idx]

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def loc(self, region: Region) -> np.ndarray:
        """Active-vector positions of ``region``.

        ``region`` is ``"omega"``, ``"exterior"`` (all windows), a window
        number ``k`` (0-based) or a sequence of window numbers.
        """
        if isinstance(region, str):
            if region == "omega":
                return self.omega_loc
            if region == "exterior":
                return self.loc(tuple(range(self.n_windows)))
            if region == "active":
                return np.arange(self.n_active)
            raise KeyError(region)
        if isinstance(region, (int, np.integer)):
            return self.w_loc[region]
        parts = [self.w_loc[k] for k in region]
        return np.sort(np.concatenate(parts)) if parts else np.array([], dtype=int)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_active)

    def extend(self, values, region: Region) -> np.ndarray:
        """Zero-extend values given on ``region`` to an active-node vector."""
        out = self.zeros()
        out[self.loc(region)] = values
        return out

    def restrict(self, u, region: Region) -> np.ndarray:
        return np.asarray(u)[self.loc(region)]

    def check_support(self, u, region: Region, name="function"):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_active,):
            raise SupportViolation(f"{name} has shape {u.shape}, expected ({self.n_active},)")
        mask = np.ones(self.n_active, dtype=bool)
        mask[self.loc(region)] = False
        if np.any(u[mask] != 0.0):
            raise SupportViolation(f"{name} is not supported on region {region!r}")
        return u


def build_lattice(omega, ws, h) -> Lattice:
    """Build the lattice for interval ``omega`` and exterior windows ``ws``.

    Endpoints must be integer multiples of ``h``, every interval must contain
    at least one interior node and distinct intervals must be at distance at
    least ``h`` from each other.
    """
    h = float(h)
    if not h > 0:
        raise EmptyRegion(f"lattice spacing must be positive, got {h!r}")
    intervals = [tuple(map(float, omega))] + [tuple(map(float, w)) for w in ws]
    units = []
    for a, b in intervals:
        ia, ib = _to_units(a, h), _to_units(b, h)
        if ib - ia < 2:
            raise EmptyRegion(f"interval ({a}, {b}) is shorter than 2h")
        units.append((ia, ib))

    order = sorted(range(len(units)), key=lambda i: units[i][0])
    for p, q in zip(order, order[1:]):
        if units[q][0] - units[p][1] < 1:
            raise RegionsTouch(
                f"intervals {intervals[p]} and {intervals[q]} are closer than h")

    lo = min(u[0] for u in units)
    hi = max(u[1] for u in units)
    nodes = h * np.arange(lo, hi + 1, dtype=float)
    glob = [np.arange(a + 1, b, dtype=int) - lo for a, b in units]
    active = np.sort(np.concatenate(glob))
    pos = np.full(len(nodes), -1, dtype=int)
    pos[active] = np.arange(len(active))

    return Lattice(
        h=h,
        left=float(h * lo),
        right=float(h * hi),
        nodes=nodes,
        omega=intervals[0],
        windows=tuple(intervals[1:]),
        omega_idx=glob[0],
        w_idx=tuple(glob[1:]),
        active_idx=active,
        omega_loc=pos[glob[0]],
        w_loc=tuple(pos[g] for g in glob[1:]),
    )


def fractional_constant(s: float) -> float:
    """Normalisation ``c_{1,s}`` of the 1D kernel ``|x - y|^{-1-2s}``."""
    return s * 4.0**s * gamma(0.5 + s) / (np.sqrt(np.pi) * gamma(1.0 - s))


def toeplitz_weights(s: float, h: float, K: int) -> np.ndarray:
    """Return ``mu_0..mu_K``; ``L_ij = mu_0`` on the diagonal, ``-mu_|i-j|`` off it.

    ``mu_0`` already includes the exact tail ``int_{|z|>h} |z|^{-1-2s} dz``,
    i.e. the contribution of the region where the function vanishes.  The
    row sums of the infinite Toeplitz matrix are zero (constants lie in the
    kernel of the continuum operator).
    """
    a = 2.0 * s
    t = np.arange(1, K + 1, dtype=float)

    def p0(x):  # antiderivative of x^{-1-a}
        return x ** (-a) / (-a)

    def p1(x):  # antiderivative of x^{-a}
        return np.log(x) if a == 1.0 else x ** (1.0 - a) / (1.0 - a)

    lo = np.maximum(t - 1.0, 1.0)
    rise = (p1(t) - p1(lo)) - (t - 1.0) * (p0(t) - p0(lo))
    fall = (t + 1.0) * (p0(t + 1.0) - p0(t)) - (p1(t + 1.0) - p1(t))
    near = 1.0 / (2.0 - a)

    mu = np.empty(K + 1)
    mu[0] = 2.0 * near + 1.0 / s
    mu[1:] = rise + fall
    mu[1] += near
    return fractional_constant(s) * h ** (-a) * mu


@dataclass(frozen=True, eq=False)
class FracOperator:
    """Discrete ``(-Delta)^s`` on the active nodes of a lattice."""

    lattice: Lattice
    s: float
    c1s: float
    weights: np.ndarray
    L: np.ndarray
    mass: np.ndarray
    gram_hs_w: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def h(self) -> float:
        return self.lattice.h

    def block(self, rows: Region, cols: Region) -> np.ndarray:
        lat = self.lattice
        return self.L[np.ix_(lat.loc(rows), lat.loc(cols))]

    def hs_gram(self, region: Region) -> np.ndarray:
        """Discrete H^s Gram ``h (I + L_RR)`` on ``region``."""
        key = ("gram", _region_key(region))
        if key not in self._cache:
            Lrr = self.block(region, region)
            self._cache[key] = self.h * (np.eye(len(Lrr)) + Lrr)
        return self._cache[key]

    def hs_chol(self, region: Region) -> np.ndarray:
        """Upper Cholesky factor ``R`` with ``hs_gram(region) = R^T R``."""
        key = ("chol", _region_key(region))
        if key not in self._cache:
            try:
                self._cache[key] = linalg.cholesky(self.hs_gram(region), lower=False)
            except linalg.LinAlgError as exc:
                raise GramNotSPD(f"H^s Gram on {region!r} is not SPD") from exc
        return self._cache[key]

    def apply(self, u) -> np.ndarray:
        return self.L @ np.asarray(u, dtype=float)


def _region_key(region):
    if isinstance(region, (str, int, np.integer)):
        return region
    return tuple(region)


def assemble_operator(lat: Lattice, s: float) -> FracOperator:
    """Assemble the dense symmetric matrix of ``(-Delta)^s`` on ``lat``."""
    s = float(s)
    if not 0.0 < s < 1.0:
        raise InvalidOrder(f"fractional order must lie in (0, 1), got {s!r}")
    K = len(lat.nodes)
    mu = toeplitz_weights(s, lat.h, K)
    gi = lat.active_idx
    dist = np.abs(gi[:, None] - gi[None, :])
    L = -mu[dist]
    np.fill_diagonal(L, mu[0])
    op = FracOperator(
        lattice=lat,
        s=s,
        c1s=fractional_constant(s),
        weights=mu,
        L=L,
        mass=np.full(lat.n_active, lat.h),
        gram_hs_w=(),
    )
    grams = tuple(op.hs_gram(k) for k in range(lat.n_windows))
    object.__setattr__(op, "gram_hs_w", grams)
    return op


def l2_inner(op: FracOperator, u, v, region: Region = "active") -> float:
    """Discrete ``(u, v)`` over ``region``: ``h * sum_{i in region} u_i v_i``."""
    loc = op.lattice.loc(region)
    return float(op.h * np.dot(np.asarray(u)[loc], np.asarray(v)[loc]))


def hs_norm(op: FracOperator, f, region: Region = 0) -> float:
    """Discrete H^s norm of ``f`` supported on ``region`` (a window by default)."""
    lat = op.lattice
    f = lat.check_support(f, region, "f")
    fr = f[lat.loc(region)]
    R = op.hs_chol(region)
    return float(np.linalg.norm(R @ fr))


def hminus_norm(op: FracOperator, g, region: Region = 0) -> float:
    """Discrete H^{-s} norm ``h * sqrt(g^T G^{-1} g)`` of a density on ``region``."""
    lat = op.lattice
    g = lat.check_support(g, region, "g")
    gr = g[lat.loc(region)]
    R = op.hs_chol(region)
    y = linalg.solve_triangular(R, gr, trans="T")
    return float(op.h * np.linalg.norm(y))
