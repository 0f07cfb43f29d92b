"""Finite-dimensional potential reconstruction and stability experiments.

If ``q1 - q2 = sum_j a_j g_j`` and ``h1_l``, ``h2_l`` are test functions on
Omega, the Alessandrini identity turns measurements into the linear system

    sum_j a_j (g_j, h1_l h2_l)_Omega = ((Lambda_1 - Lambda_2) f1_l, f2_l)_W + O(eps)

where ``f1_l`` (window ``W1``, potential ``q1``) and ``f2_l`` (window ``W2``,
potential ``q2``) are Runge controls whose solutions approximate ``h1_l``
and ``h2_l`` to relative error ``eps``.  The matrix on the left is ``M``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (AbsorptionViolated, DeltaTooLarge, IllConditionedM,
                     InadmissibleControl, NoConvergence, PartitionNotAligned)
from .fracgrid import FracOperator, Lattice
from .forward import (Potential, cauchy_basis, cauchy_pairing,
                      dirichlet_spectrum, dtn_difference, dtn_matrix,
                      kernel_spaces, whitened_dtn)
from .runge import assemble_A, runge_control, weighted_svd

__all__ = [
    "PotentialSpan",
    "TestPairs",
    "ReconstructionResult",
    "LipschitzResult",
    "InstabilityReport",
    "make_basis",
    "choose_test_pairs",
    "reconstruct_oracle",
    "reconstruct_fixed_point",
    "reconstruct_cauchy",
    "lipschitz_estimate",
    "instability_experiment",
]

KINDS = ("piecewise_constant", "piecewise_affine", "trigonometric")
COND_CEILING = 1e8
JACOBIAN_STEP = 1e-4
# Controls with more modes cost ~1e10 and beyond; at that size the roundoff
# of the pairing (machine eps * cost^2 * ||Lambda||) exceeds the truncation error.
FLOOR_ALPHA = 1e-10
# Measurements formed from raw data (Cauchy pairings, Lambda_1 f - Lambda_2 f)
# cancel terms of size cost^2, so they need cheaper controls.
FLOOR_ALPHA_RAW = 1e-6
_ALIGN_TOL = 1e-9
_SCREEN_LIMIT = 10_000_000
_SCREEN_CHUNK = 5**7


@dataclass(frozen=True, eq=False)
class PotentialSpan:
    """Orthonormal family ``g_1..g_m`` on Omega (rows of ``g``).

    ``partition`` lists the cells ``D_1..D_N`` for the partition kinds and
    ``cell_index`` maps each Omega node to its cell (``-1`` for the
    trigonometric kind).
    """

    kind: str
    N: int
    g: np.ndarray
    partition: tuple
    cell_index: np.ndarray
    gram: np.ndarray
    lattice: Lattice = field(repr=False)

    @property
    def m(self) -> int:
        return self.g.shape[0]

    def potential(self, a, base: Optional[Potential] = None) -> Potential:
        """``base + sum_j a_j g_j`` as a :class:`Potential`."""
        a = np.asarray(a, dtype=float)
        values = a @ self.g
        if base is not None:
            values = values + base.values
        return Potential(values, span=self, coeffs=a)

    def coefficients(self, values) -> np.ndarray:
        """L^2_h projection coefficients of ``values`` on the span."""
        return self.lattice.h * (self.g @ np.asarray(values, dtype=float))

    def indicators(self) -> np.ndarray:
        """Unnormalised cell indicators, one row per cell."""
        if self.kind == "trigonometric":
            return np.ones((1, self.g.shape[1]))
        return np.array([(self.cell_index == j).astype(float) for j in range(self.N)])


def _cells(lat: Lattice, N: int, strict: bool):
    a, b = lat.omega
    edges = a + (b - a) * np.arange(N + 1) / N
    if strict:
        units = edges / lat.h
        if np.any(np.abs(units - np.round(units)) > _ALIGN_TOL * np.maximum(1.0, np.abs(units))):
            raise PartitionNotAligned(
                f"{N} equal cells of {lat.omega} are not aligned to h={lat.h}")
    x = lat.x[lat.omega_loc]
    tol = _ALIGN_TOL * lat.h
    idx = np.searchsorted(edges[1:-1] - tol, x, side="right")
    return tuple(zip(edges[:-1], edges[1:])), idx


def _orthonormalize(G_raw: np.ndarray, h: float) -> np.ndarray:
    """Gram-Schmidt in L^2_h via QR, keeping the sign of the leading coefficient."""
    Q, Rf = linalg.qr(np.sqrt(h) * G_raw.T, mode="economic")
    sign = np.sign(np.diag(Rf))
    sign[sign == 0] = 1.0
    return (Q * sign).T / np.sqrt(h)


def make_basis(lat: Lattice, kind: str, N: int, *, strict: bool = True) -> PotentialSpan:
    """Orthonormal basis of piecewise constant, piecewise affine or trigonometric potentials.

    Parameters
    ----------
    lat : Lattice
    kind : {"piecewise_constant", "piecewise_affine", "trigonometric"}
    N : int
        Number of equal cells of Omega (partition kinds) or number of
        trigonometric functions ``1, cos, sin, cos 2, ...``.
    strict : bool
        Require cell endpoints on the lattice.  With ``strict=False`` nodes
        are assigned to the half-open cell containing them.

    Returns
    -------
    PotentialSpan
        ``m = N`` for the constant and trigonometric kinds and ``m = 2N``
        for the affine kind.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind {kind!r}")
    if N < 1:
        raise ValueError("N must be at least 1")
    h = lat.h
    x = lat.x[lat.omega_loc]
    a, b = lat.omega
    if kind == "trigonometric":
        c, ell = 0.5 * (a + b), b - a
        rows = [np.ones_like(x)]
        k = 1
        while len(rows) < N:
            rows.append(np.cos(2 * np.pi * k * (x - c) / ell))
            if len(rows) < N:
                rows.append(np.sin(2 * np.pi * k * (x - c) / ell))
            k += 1
        partition, idx = (), np.full(len(x), -1)
    else:
        partition, idx = _cells(lat, N, strict)
        rows = []
        for j, (lo, hi) in enumerate(partition):
            chi = (idx == j).astype(float)
            rows.append(chi)
            if kind == "piecewise_affine":
                rows.append((x - 0.5 * (lo + hi)) * chi)
    raw = np.array(rows)
    if np.any(np.sum(raw != 0, axis=1) == 0):
        raise PartitionNotAligned("a cell contains no lattice node")
    g = _orthonormalize(raw, h)
    return PotentialSpan(kind=kind, N=N, g=g, partition=partition,
                         cell_index=idx, gram=h * g @ g.T, lattice=lat)


@dataclass(frozen=True)
class TestPairs:
    """Test functions ``h1_l``, ``h2_l`` (rows) and the matrix ``M``."""

    h1: np.ndarray
    h2: np.ndarray
    M: np.ndarray
    condM: float
    L0: float
    L1: float
    width: int


def _smooth(v: np.ndarray, width: int) -> np.ndarray:
    """Discrete triangular smoothing of half-width ``width`` nodes, zero outside Omega."""
    if width <= 1:
        return v.copy()
    k = np.arange(-width + 1, width)
    w = (width - np.abs(k)) / width**2
    return np.convolve(v, w, mode="same")


def _support_rows(span: PotentialSpan) -> np.ndarray:
    if span.kind == "trigonometric":
        return np.ones_like(span.g)
    return np.array([(span.cell_index == j).astype(float)
                     for j in range(span.N) for _ in range(span.m // span.N)])


def choose_test_pairs(span: PotentialSpan, s: float, op: FracOperator = None, *,
                      width: int = 2, ceiling: float = COND_CEILING) -> TestPairs:
    """Test pairs with ``h1_l h2_l`` close to ``g_l``.

    ``h1_l`` is the indicator of the support of ``g_l`` and ``h2_l`` is
    ``g_l``; both are smoothed by a triangular kernel of half-width
    ``width * h`` when ``s >= 1/2`` and then rescaled to equal L^2 norms.
    For normalised indicators this gives ``M = I``.

    ``L0`` uses the discrete H^s(Omega) norm and needs ``op``; without it
    ``L0`` is ``nan``.

    Raises
    ------
    IllConditionedM
        If ``cond(M)`` exceeds ``ceiling``.
    """
    h = span.lattice.h
    smooth = s >= 0.5
    w = width if smooth else 1
    H1, H2 = [], []
    for sup, g in zip(_support_rows(span), span.g):
        a, b = _smooth(sup, w), _smooth(g, w)
        na, nb = np.sqrt(h * a @ a), np.sqrt(h * b @ b)
        r = np.sqrt(nb / na)
        H1.append(a * r)
        H2.append(b / r)
    H1, H2 = np.array(H1), np.array(H2)
    M = h * (H1 * H2) @ span.g.T
    condM = float(np.linalg.cond(M))
    if not np.isfinite(condM) or condM > ceiling:
        raise IllConditionedM(f"cond(M) = {condM:.3e} exceeds {ceiling:.1e}")
    l2 = lambda v: np.sqrt(h * v @ v)
    L1 = max(l2(a) * l2(b) for a, b in zip(H1, H2))
    if op is not None:
        G = op.hs_gram("omega")
        hs = lambda v: np.sqrt(v @ G @ v)
        L0 = max(hs(a) * hs(b) for a, b in zip(H1, H2))
    else:
        L0 = float("nan")
    return TestPairs(h1=H1, h2=H2, M=M, condM=condM, L0=float(L0), L1=float(L1), width=w)


@dataclass
class ReconstructionResult:
    """Recovered coefficients ``a_hat`` with ``M a_hat = rhs``.

    ``controls`` holds ``(f1_l, f2_l)`` for every test pair and
    ``residual_bound`` is ``condM * eps * L0`` with the largest achieved
    control error.  ``iterations`` is the coefficient trace of the
    fixed-point mode.
    """

    a_hat: np.ndarray
    rhs: np.ndarray
    M: np.ndarray
    controls: list
    eps_requested: float
    eps_achieved: float
    residual_bound: float
    iterations: list = field(default_factory=list)
    converged: bool = True
    mode: str = "oracle"

    def error(self, a_true) -> float:
        """Relative sup-norm error against planted coefficients."""
        a_true = np.asarray(a_true, dtype=float)
        return float(np.max(np.abs(self.a_hat - a_true)) / np.max(np.abs(a_true)))


def _absorption(pairs: TestPairs, eps: float):
    bound = 0.5 / (pairs.condM * pairs.L0)
    if eps > bound:
        raise AbsorptionViolated(
            f"eps={eps:.3e} exceeds the absorption bound 1/(2 condM L0) = {bound:.3e}")


def _controls(svd, targets, eps, policy, floor_alpha) -> list:
    if policy == "strict":
        return [runge_control(svd, t, eps=eps) for t in targets]
    if policy == "floor":
        alpha = floor_alpha * svd.sigmas[0]
        out = []
        for t in targets:
            r = runge_control(svd, t, alpha=alpha)
            if r.eps_achieved <= eps:
                r = runge_control(svd, t, eps=eps)
            out.append(r)
        return out
    raise ValueError(f"unknown policy {policy!r}")


def _solve_M(pairs: TestPairs, b):
    return linalg.solve(pairs.M, b)


def _finish(pairs, b, c1, c2, eps, mode, **kw) -> ReconstructionResult:
    achieved = max(r.eps_achieved for r in c1 + c2)
    L0 = pairs.L0 if np.isfinite(pairs.L0) else pairs.L1
    return ReconstructionResult(
        a_hat=_solve_M(pairs, b), rhs=np.asarray(b), M=pairs.M,
        controls=list(zip(c1, c2)), eps_requested=eps, eps_achieved=achieved,
        residual_bound=pairs.condM * achieved * L0, mode=mode, **kw)


def reconstruct_oracle(op: FracOperator, q1: Potential, q2: Potential,
                       span: PotentialSpan, pairs: TestPairs, eps: float, *,
                       windows: Sequence[int] = (0, 1), policy: str = "strict",
                       measurement: str = "difference",
                       floor_alpha: float = FLOOR_ALPHA) -> ReconstructionResult:
    """Recover ``q1 - q2`` in ``span`` from DtN measurements with known controls.

    Parameters
    ----------
    windows : (int, int)
        Windows carrying the controls for ``q1`` and for ``q2``.
    policy : {"strict", "floor"}
        ``"strict"`` raises :class:`TargetUnreachable` when a control cannot
        meet ``eps``.  ``"floor"`` stops at the threshold
        ``FLOOR_ALPHA * sigma_1`` when ``eps`` is out of reach and records
        the achieved error.
    measurement : {"difference", "subtract"}
        ``"difference"`` forms ``Lambda_1 - Lambda_2`` without cancellation;
        ``"subtract"`` subtracts the two assembled DtN matrices.
    """
    _absorption(pairs, eps)
    k1, k2 = windows
    lat = op.lattice
    S1 = weighted_svd(assemble_A(op, q1, region=k1))
    S2 = weighted_svd(assemble_A(op, q2, region=k2))
    c1 = _controls(S1, pairs.h1, eps, policy, floor_alpha)
    c2 = _controls(S2, pairs.h2, eps, policy, floor_alpha)
    if measurement == "difference":
        D = dtn_difference(op, q1, q2, k1, k2)
    elif measurement == "subtract":
        D = dtn_matrix(op, q1, k1, k2) - dtn_matrix(op, q2, k1, k2)
    else:
        raise ValueError(f"unknown measurement {measurement!r}")
    b = np.array([op.h * lat.restrict(r2.f, k2) @ D @ lat.restrict(r1.f, k1)
                  for r1, r2 in zip(c1, c2)])
    return _finish(pairs, b, c1, c2, eps, "oracle")


def _gap_threshold(sigmas, n_modes) -> float:
    """Threshold in the middle (geometrically) of the gap after ``n_modes`` modes."""
    if n_modes == 0:
        return 2.0 * sigmas[0]
    if n_modes >= len(sigmas):
        return 0.5 * sigmas[-1]
    return float(np.sqrt(sigmas[n_modes - 1] * sigmas[n_modes]))


def reconstruct_fixed_point(op: FracOperator, measure: Callable, q2_ref: Potential,
                            span: PotentialSpan, pairs: TestPairs, eps: float, *,
                            max_iter: int = 20, tol: float = 1e-8,
                            windows: Sequence[int] = (0, 1),
                            policy: str = "strict",
                            floor_alpha: float = FLOOR_ALPHA_RAW) -> ReconstructionResult:
    """Recover a hidden potential when only ``f -> Lambda_{q1} f`` is available.

    ``measure(f)`` receives local data on ``windows[0]`` and returns
    ``(Lambda_{q1} f)`` on ``windows[1]``.  The controls for the unknown
    potential are rebuilt from the current iterate ``q2_ref + sum a_j g_j``
    until successive coefficients agree to ``tol`` in the sup norm.  The
    truncation of each control is chosen at the first iterate and then kept.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations; the exception carries the result.
    """
    _absorption(pairs, eps)
    k1, k2 = windows
    lat = op.lattice
    S2 = weighted_svd(assemble_A(op, q2_ref, region=k2))
    c2 = _controls(S2, pairs.h2, eps, policy, floor_alpha)
    Lam2 = dtn_matrix(op, q2_ref, k1, k2).entries
    a = np.zeros(span.m)
    trace = [a.copy()]
    result = None
    alphas = None
    for _ in range(max_iter):
        qt = span.potential(a, base=q2_ref)
        S1 = weighted_svd(assemble_A(op, qt, region=k1))
        if alphas is None:
            c1 = _controls(S1, pairs.h1, eps, policy, floor_alpha)
            alphas = [_gap_threshold(S1.sigmas, r.n_modes) for r in c1]
        else:
            # frozen thresholds keep the number of modes fixed across iterates
            c1 = [runge_control(S1, t, alpha=al) for t, al in zip(pairs.h1, alphas)]
        b = []
        for r1, r2 in zip(c1, c2):
            f1 = lat.restrict(r1.f, k1)
            meas = np.asarray(measure(f1)) - Lam2 @ f1
            b.append(op.h * lat.restrict(r2.f, k2) @ meas)
        result = _finish(pairs, np.array(b), c1, c2, eps, "fixed-point")
        a_new = result.a_hat
        trace.append(a_new.copy())
        step = np.max(np.abs(a_new - a))
        a = a_new
        if step <= tol:
            result.iterations = trace
            return result
    result.iterations = trace
    result.converged = False
    raise NoConvergence(f"no convergence after {max_iter} iterations "
                        f"(last step {step:.3e})", result=result)


def reconstruct_cauchy(op: FracOperator, q1: Potential, q2: Potential,
                       span: PotentialSpan, pairs: TestPairs, eps: float, *,
                       windows: Sequence[int] = (0, 1), policy: str = "strict",
                       admissible_tol: float = 1e-8,
                       floor_alpha: float = FLOOR_ALPHA_RAW) -> ReconstructionResult:
    """Recover ``q1 - q2`` from Cauchy data; zero may be a Dirichlet eigenvalue.

    Controls are built in the kernel setting (data in ``H1``, plus the
    ``Z2`` part of the target).  Every measurement is formed on the union of
    the two windows from the Cauchy data of ``u1`` and ``u2`` and of the
    closest element ``v2`` of the ``q2`` Cauchy set to the data of ``u1``.

    Raises
    ------
    InadmissibleControl
        If a control leaves ``H1`` by more than ``admissible_tol`` (relative).
    """
    _absorption(pairs, eps)
    k1, k2 = windows
    lat = op.lattice
    union = (min(k1, k2), max(k1, k2))
    n = len(lat.loc(union))

    def build(q, k, targets):
        ks = kernel_spaces(op, q)
        R = assemble_A(op, q, ks, region=k)
        ctr = _controls(weighted_svd(R), targets, eps, policy, floor_alpha)
        P1 = ks.h1_projector(k) if ks.dim else None
        sols = []
        for r in ctr:
            if P1 is not None:
                off = r.f_local - P1 @ r.f_local
                if (np.sqrt(R.domain_inner(off, off))
                        > admissible_tol * max(r.cost, 1.0)):
                    raise InadmissibleControl("control is not admissible exterior data")
            u = r.f.copy()
            u[lat.omega_loc] = r.approximation + r.z[lat.omega_loc]
            sols.append(u)
        return ks, ctr, sols

    ks1, c1, u1s = build(q1, k1, pairs.h1)
    ks2, c2, u2s = build(q2, k2, pairs.h2)
    C2 = cauchy_basis(op, q2, ks2, region=union)
    b = []
    for u1, u2 in zip(u1s, u2s):
        d1 = _cauchy(op, u1, union)
        d2 = _cauchy(op, u2, union)
        v2 = C2.project(d1)
        b.append(cauchy_pairing(op.h, n, d1 - v2, d2))
    return _finish(pairs, np.array(b), c1, c2, eps, "cauchy")


def _cauchy(op, u, region):
    loc = op.lattice.loc(region)
    return np.concatenate([u[loc], (op.L @ u)[loc]])


@dataclass(frozen=True)
class LipschitzResult:
    """``C_emp`` over sampled pairs and the Jacobian singular values at ``q2``."""

    C_emp: float
    sigma_min: float
    jacobian_sv: np.ndarray
    ratios: np.ndarray
    seed: int


def _opnorm_star(op, q1, q2, k1, k2) -> float:
    """Min over the two window orderings of ``||Lambda_1 - Lambda_2||_*``."""
    out = []
    for a, b in ((k1, k2), (k2, k1)):
        D = dtn_difference(op, q1, q2, a, b)
        out.append(np.linalg.norm(whitened_dtn(op, D, a, b), 2))
    return float(min(out))


def measurement_jacobian(op: FracOperator, span: PotentialSpan, q_ref: Potential,
                         windows=(0, 1), step: float = JACOBIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``a -> vec(whitened Lambda_{q_ref + a.g})`` at 0."""
    k1, k2 = windows
    cols = []
    for g in span.g:
        qp = Potential(q_ref.values + step * g)
        qm = Potential(q_ref.values - step * g)
        D = dtn_difference(op, qp, qm, k1, k2)
        cols.append(whitened_dtn(op, D, k1, k2).ravel() / (2 * step))
    return np.array(cols).T


def lipschitz_estimate(op: FracOperator, span: PotentialSpan, trials: int, seed: int, *,
                       q_ref: Optional[Potential] = None, windows=(0, 1),
                       step: float = JACOBIAN_STEP) -> LipschitzResult:
    """Empirical Lipschitz constant and Jacobian ``sigma_min`` for ``span``.

    Potentials ``q_ref + sum a_j g_j`` are drawn with coefficients uniform
    in ``[-lambda_1/2, lambda_1/2] / sqrt(m)`` and rescaled so that
    ``||q - q_ref||_inf <= lambda_1 / 2``.
    """
    if q_ref is None:
        q_ref = Potential.zero(op)
    k1, k2 = windows
    lam1 = dirichlet_spectrum(op, Potential.zero(op)).lambda_1
    rng = np.random.default_rng(seed)
    bound = 0.5 * lam1
    m = span.m

    def draw():
        a = rng.uniform(-bound, bound, m) / np.sqrt(m)
        sup = np.max(np.abs(a @ span.g))
        if sup > bound:
            a *= bound / sup
        return span.potential(a, base=q_ref)

    ratios = []
    for _ in range(trials):
        q1, q2 = draw(), draw()
        dq = np.max(np.abs(q1.values - q2.values))
        ratios.append(dq / _opnorm_star(op, q1, q2, k1, k2))
    J = measurement_jacobian(op, span, q_ref, windows, step)
    sv = linalg.svd(J, compute_uv=False)
    return LipschitzResult(C_emp=float(max(ratios)), sigma_min=float(sv[-1]),
                           jacobian_sv=sv, ratios=np.array(ratios), seed=seed)


@dataclass(frozen=True)
class InstabilityReport:
    """Ratios ``||Lambda_1 - Lambda_2||_{L2->L2} / ||q1 - q2||_inf`` over sampled pairs.

    ``prefix_min[k]`` is the minimum over the first ``k + 1`` pairs, so the
    reported minimum for a smaller budget is read off directly.
    """

    N: int
    delta: float
    sample_pairs: int
    seed: int
    sampler: str
    c1: np.ndarray
    c2: np.ndarray
    ratios: np.ndarray
    prefix_min: np.ndarray

    @property
    def min_ratio(self) -> float:
        return float(self.prefix_min[-1])


def _digits(index: np.ndarray, N: int) -> np.ndarray:
    """Base-5 digits of ``index`` mapped to ``{-2, ..., 2}``."""
    out = np.empty((len(index), N), dtype=np.int8)
    rem = index.copy()
    for j in range(N - 1, -1, -1):
        out[:, j] = rem % 5 - 2
        rem //= 5
    return out


def _canonical(d: np.ndarray) -> np.ndarray:
    """Rows whose first nonzero entry is positive (one of each ``+-d`` pair)."""
    nz = d != 0
    first = np.argmax(nz, axis=1)
    lead = d[np.arange(len(d)), first]
    return nz.any(axis=1) & (lead > 0)


def _screen(Rj: np.ndarray, N: int, budget: int, rng) -> np.ndarray:
    """Difference vectors ``d`` in ``{-2..2}^N`` with the smallest linearised ratio."""
    total = 5**N
    best_d = np.empty((0, N), dtype=np.int8)
    best_s = np.empty(0)
    if total <= _SCREEN_LIMIT:
        chunks = (np.arange(lo, min(lo + _SCREEN_CHUNK, total))
                  for lo in range(0, total, _SCREEN_CHUNK))
    else:
        pool = rng.choice(total, size=_SCREEN_LIMIT, replace=False) if total < 2**62 \
            else rng.integers(0, total, _SCREEN_LIMIT)
        pool.sort()
        chunks = np.array_split(pool, max(1, _SCREEN_LIMIT // _SCREEN_CHUNK))
    for idx in chunks:
        d = _digits(np.asarray(idx, dtype=np.int64), N)
        d = d[_canonical(d)]
        if not len(d):
            continue
        sc = np.linalg.norm(d @ Rj.T, axis=1) / np.max(np.abs(d), axis=1)
        d_all = np.vstack([best_d, d])
        s_all = np.concatenate([best_s, sc])
        keep = np.lexsort((np.arange(len(s_all)), s_all))[:budget]
        best_d, best_s = d_all[keep], s_all[keep]
    return best_d


def _realize(d: np.ndarray, rng):
    """Pick ``c1, c2`` in ``{-1, 0, 1}^N`` with ``c1 - c2 = d``."""
    c1 = np.empty_like(d)
    for j, dj in enumerate(d):
        if dj == 2:
            c1[j] = 1
        elif dj == -2:
            c1[j] = -1
        elif dj == 1:
            c1[j] = rng.integers(0, 2)
        elif dj == -1:
            c1[j] = -rng.integers(0, 2)
        else:
            c1[j] = rng.integers(-1, 2)
    return c1, c1 - d


def instability_experiment(op: FracOperator, N: int, delta: float, sample_pairs: int,
                           seed: int, *, sampler: str = "screened",
                           region="exterior") -> InstabilityReport:
    """Smallest DtN separation of a ``delta``-discrete family of ``3^N`` potentials.

    Potentials take the values ``{-delta, 0, delta}`` on the ``N`` equal cells
    of Omega.  With ``sampler="uniform"`` the pairs are drawn independently
    and uniformly.  With ``sampler="screened"`` every difference pattern
    ``c1 - c2`` is ranked by the linearised ratio at ``q = 0`` and the
    ``sample_pairs`` best patterns are evaluated exactly; this searches for
    the close pairs the family must contain instead of waiting to draw them.

    Raises
    ------
    DeltaTooLarge
        If ``delta > min(lambda_1 / 2, 1)``.
    """
    lam1 = dirichlet_spectrum(op, Potential.zero(op)).lambda_1
    if not 0 < delta <= min(0.5 * lam1, 1.0):
        raise DeltaTooLarge(f"delta={delta} must lie in (0, min(lambda_1/2, 1)] "
                            f"= (0, {min(0.5 * lam1, 1.0):.6g}]")
    span = make_basis(op.lattice, "piecewise_constant", N)
    chi = span.indicators()
    rng = np.random.default_rng(seed)
    total_pairs = 3**N * (3**N - 1) // 2

    if sampler == "uniform":
        pairs = []
        if total_pairs <= sample_pairs:
            allc = np.array(list(itertools.product((-1, 0, 1), repeat=N)))
            pairs = [(allc[i], allc[j]) for i, j in itertools.combinations(range(len(allc)), 2)]
        else:
            for _ in range(sample_pairs):
                while True:
                    c1 = rng.integers(-1, 2, N)
                    c2 = rng.integers(-1, 2, N)
                    if np.any(c1 != c2):
                        break
                pairs.append((c1, c2))
    elif sampler == "screened":
        cols = []
        for row in chi:
            qp, qm = Potential(JACOBIAN_STEP * row), Potential(-JACOBIAN_STEP * row)
            cols.append(dtn_difference(op, qp, qm, region, region).ravel()
                        / (2 * JACOBIAN_STEP))
        Rj = linalg.qr(np.array(cols).T, mode="r")[0][:N]
        pairs = [_realize(d, rng) for d in _screen(Rj, N, sample_pairs, rng)]
    else:
        raise ValueError(f"unknown sampler {sampler!r}")

    ratios = []
    for c1, c2 in pairs:
        q1 = Potential(delta * (c1 @ chi))
        q2 = Potential(delta * (c2 @ chi))
        D = dtn_difference(op, q1, q2, region, region)
        dq = delta * np.max(np.abs(c1 - c2))
        ratios.append(np.linalg.norm(D, 2) / dq)
    ratios = np.array(ratios)
    return InstabilityReport(
        N=N, delta=float(delta), sample_pairs=len(ratios), seed=seed, sampler=sampler,
        c1=np.array([p[0] for p in pairs]), c2=np.array([p[1] for p in pairs]),
        ratios=ratios, prefix_min=np.minimum.accumulate(ratios))
