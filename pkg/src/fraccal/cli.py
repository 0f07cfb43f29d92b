"""Command-line front end: ``fraccal <subcommand> --config <path> [options]``.

Every experiment writes ``record.json`` and one CSV per metric table into
the output directory (``--plot`` adds an SVG per primary curve).  Exit codes:
0 success, 1 configuration error, 2 numerical precondition failure,
3 internal tolerance breach; failures print one ``key=value`` line on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import (AbsorptionViolated, ConfigError, DeltaTooLarge, FracCalError,
                     NoConvergence, ToleranceBreach)
from .fracgrid import assemble_operator, build_lattice
from .forward import (Potential, dirichlet_spectrum, dtn_matrix, kernel_spaces,
                      solve_forward, solve_forward_kernel)
from .inverse import (choose_test_pairs, instability_experiment, lipschitz_estimate,
                      make_basis, reconstruct_cauchy, reconstruct_fixed_point,
                      reconstruct_oracle)
from .output import svg_line_chart, write_csv, write_json, atomic_write
from .runge import RANK_TOL, assemble_A, cost_curve, density_check, weighted_svd

__all__ = ["main", "run", "validate", "SUBCOMMANDS"]


class _Outcome:
    def __init__(self):
        self.tables = {}
        self.summary = {}
        self.plots = []
        self.provenance = []

    def table(self, name, **columns):
        self.tables[name] = {k: list(np.asarray(v).tolist()) for k, v in columns.items()}

    def plot(self, table, x, y, title, xlabel, ylabel, logy=False):
        self.plots.append((table, x, y, title, xlabel, ylabel, logy))


def _operator(cfg: ExperimentConfig):
    lat = build_lattice(cfg.omega, cfg.windows, cfg.h)
    return assemble_operator(lat, cfg.s)


def _potential(cfg: ExperimentConfig, op) -> Potential:
    q = Potential.constant(op, cfg.q_const)
    if cfg.kernel_index > 0:
        lam = dirichlet_spectrum(op, q).eigenvalues
        if cfg.kernel_index > len(lam):
            raise ConfigError(f"kernel_index={cfg.kernel_index} exceeds |Omega nodes|")
        q = q.shifted(-lam[cfg.kernel_index - 1])
    return q


def _indicator(op, interval):
    x = op.lattice.x[op.lattice.omega_loc]
    v = ((x > interval[0]) & (x < interval[1])).astype(float)
    n = np.sqrt(op.h * v @ v)
    if n == 0:
        raise ConfigError(f"target {interval} contains no Omega node")
    return v / n


def _threads() -> int:
    raw = os.environ.get("FRACCAL_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"FRACCAL_THREADS={raw!r} is not an integer") from exc
    return max(1, n)


def _sweep(cfg, fn):
    """Run ``fn(op, N)`` over the sweep; each worker assembles its own operator."""
    Ns = sorted(cfg.sweep) if cfg.sweep else [cfg.N]

    def task(N):
        return N, fn(_operator(cfg), N)

    with ThreadPoolExecutor(max_workers=min(_threads(), len(Ns))) as ex:
        results = dict(ex.map(task, Ns))
    return [(N, results[N]) for N in Ns]


def _fit(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        return {}
    slope, icpt = np.polyfit(x, y, 1)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum((y - slope * x - icpt) ** 2) / ss if ss > 0 else float("nan")
    return {"slope": float(slope), "intercept": float(icpt), "r2": float(r2)}


def _cmd_spectrum(cfg, out):
    op = _operator(cfg)
    q = _potential(cfg, op)
    sp = dirichlet_spectrum(op, q)
    K = op.block("omega", "omega") + np.diag(q.values)
    res = np.linalg.norm(K @ sp.eigenvectors - sp.eigenvectors * sp.eigenvalues, axis=0)
    if np.any(res > 1e-8 * np.linalg.norm(sp.eigenvectors, axis=0)):
        raise ToleranceBreach(f"eigenpair residual {res.max():.3e} exceeds 1e-8")
    n = min(cfg.n_eigs, len(sp.eigenvalues))
    out.table("eigenvalues", index=np.arange(1, n + 1), eigenvalue=sp.eigenvalues[:n])
    out.summary.update(lambda_1=sp.lambda_1, kernel_dim=int(sp.kernel_mask.sum()))
    out.plot("eigenvalues", "index", "eigenvalue", "Dirichlet spectrum", "k", "lambda_k")


def _cmd_forward(cfg, out):
    op = _operator(cfg)
    lat = op.lattice
    q = _potential(cfg, op)
    loc = lat.w_loc[cfg.window]
    f = lat.zeros()
    f[loc[len(loc) // 2]] = 1.0
    ks = kernel_spaces(op, q)
    if ks.dim:
        f = lat.extend(ks.h1_projector(cfg.window) @ f[loc], cfg.window)
        u = solve_forward_kernel(op, q, ks, f)
    else:
        u = solve_forward(op, q, f)
    om = lat.omega_loc
    r = (op.L @ u)[om] + q.values * u[om]
    ext = lat.loc("exterior")
    scale = np.linalg.norm(op.L[np.ix_(om, ext)] @ u[ext])
    resid = float(np.linalg.norm(r) / max(scale, np.finfo(float).tiny))
    if resid > 1e-9:
        raise ToleranceBreach(f"forward residual {resid:.3e} exceeds 1e-9")
    region = np.zeros(lat.n_active, dtype=int)
    for k, wl in enumerate(lat.w_loc):
        region[wl] = k + 1
    out.table("solution", x=lat.x, u=u, region=region)
    out.summary.update(relative_residual=resid, kernel_dim=ks.dim)
    out.plot("solution", "x", "u", "Forward solution", "x", "u")


def _cmd_dtn(cfg, out):
    op = _operator(cfg)
    lat = op.lattice
    q = _potential(cfg, op)
    D = dtn_matrix(op, q, cfg.window, cfg.window).entries
    raw = op.block(cfg.window, cfg.window) + op.block(cfg.window, "omega") @ (
        -np.linalg.solve(op.block("omega", "omega") + np.diag(q.values),
                         op.block("omega", cfg.window)))
    asym = float(np.linalg.norm(raw - raw.T) / np.linalg.norm(raw))
    if asym > 1e-10:
        raise ToleranceBreach(f"DtN asymmetry {asym:.3e} exceeds 1e-10")
    xw = lat.x[lat.w_loc[cfg.window]]
    i, j = np.meshgrid(np.arange(len(xw)), np.arange(len(xw)), indexing="ij")
    out.table("dtn", to_x=xw[i.ravel()], from_x=xw[j.ravel()], value=D.ravel())
    out.summary.update(asymmetry=asym, size=len(xw))


def _runge(cfg, op):
    q = _potential(cfg, op)
    ks = kernel_spaces(op, q)
    return assemble_A(op, q, ks if ks.dim else None, region=cfg.window), ks


def _cmd_runge_curve(cfg, out):
    op = _operator(cfg)
    R, _ = _runge(cfg, op)
    svd = weighted_svd(R)
    s1 = svd.sigmas[0]
    contract = np.max(np.abs(R.A @ svd.phis - svd.psis * svd.sigmas)) / s1
    if contract > 1e-9:
        raise ToleranceBreach(f"SVD contract residual {contract:.3e} exceeds 1e-9")
    ladder = svd.sigmas[svd.sigmas >= RANK_TOL * s1]
    curve = cost_curve(svd, _indicator(op, cfg.target), ladder)
    out.table("sigma", k=np.arange(1, len(svd) + 1), sigma=svd.sigmas)
    out.table("cost_curve", alpha=curve.alpha, eps=curve.eps, cost=curve.cost,
              n_modes=curve.n_modes, log_inv_eps=-np.log(curve.eps), log_cost=np.log(curve.cost))
    mus = sorted(curve.fits)
    out.table("cost_fits", mu=mus, slope=[curve.fits[m][0] for m in mus],
              intercept=[curve.fits[m][1] for m in mus], r2=[curve.fits[m][2] for m in mus])
    out.summary.update(sigma_1=float(s1), svd_contract=float(contract), ladder=len(ladder))
    out.plot("sigma", "k", "sigma", "Singular value decay", "k", "sigma_k", logy=True)
    out.plot("cost_curve", "log_inv_eps", "cost", "Cost of approximation", "log(1/eps)",
             "cost", logy=True)


def _cmd_density(cfg, out):
    op = _operator(cfg)
    R, ks = _runge(cfg, op)
    rep = density_check(R, ks)
    out.table("density", k=np.arange(1, len(rep.singular_values) + 1),
              singular_value=rep.singular_values)
    out.summary.update(rank=rep.rank, n_omega=rep.n_omega, n_window=rep.n_window,
                       kernel_dim=rep.kernel_dim, threshold=rep.threshold,
                       full_rank=rep.full_rank)
    out.plot("density", "k", "singular_value", "Rank-revealing singular values",
             "k", "s_k", logy=True)


def _cmd_reconstruct(cfg, out):
    op = _operator(cfg)
    lat = op.lattice
    span = make_basis(lat, cfg.basis, cfg.N, strict=cfg.strict_partition)
    pairs = choose_test_pairs(span, cfg.s, op)
    a_true = np.asarray(cfg.a_true, dtype=float)
    if a_true.shape != (span.m,):
        raise ConfigError(f"a_true has {a_true.size} entries, the basis has m={span.m}")
    q2 = _potential(cfg, op)
    q1 = span.potential(a_true, base=q2)
    out.provenance.append("a_true is planted by the configuration; q1 = q2 + sum a_j g_j")
    kw = dict(policy=cfg.policy)
    failure = None
    if cfg.mode == "oracle":
        res = reconstruct_oracle(op, q1, q2, span, pairs, cfg.epsilon, **kw)
    elif cfg.mode == "cauchy":
        res = reconstruct_cauchy(op, q1, q2, span, pairs, cfg.epsilon, **kw)
    else:
        Lam1 = dtn_matrix(op, q1, 0, 1).entries
        try:
            res = reconstruct_fixed_point(op, lambda f: Lam1 @ f, q2, span, pairs,
                                          cfg.epsilon, max_iter=cfg.max_iter, **kw)
        except NoConvergence as exc:
            res, failure = exc.result, exc
        trace = np.array(res.iterations)
        out.table("iterations", iteration=np.arange(len(trace)),
                  **{f"a{j + 1}": trace[:, j] for j in range(span.m)})
    err = np.abs(res.a_hat - a_true)
    out.table("coefficients", j=np.arange(1, span.m + 1), a_true=a_true,
              a_hat=res.a_hat, error=err)
    denom = np.max(np.abs(a_true))
    out.summary.update(
        mode=cfg.mode, relative_error=float(err.max() / denom) if denom else float(err.max()),
        eps_achieved=res.eps_achieved, residual_bound=res.residual_bound,
        condM=pairs.condM, L0=pairs.L0, L1=pairs.L1, converged=res.converged,
        iterations=max(len(res.iterations) - 1, 0))
    if failure is not None:
        raise failure


def _cmd_lipschitz(cfg, out):
    rows = _sweep(cfg, lambda op, N: lipschitz_estimate(
        op, make_basis(op.lattice, cfg.basis, N, strict=cfg.strict_partition),
        cfg.trials, cfg.seed))
    Ns = [N for N, _ in rows]
    out.table("lipschitz", N=Ns, C_emp=[r.C_emp for _, r in rows],
              sigma_min=[r.sigma_min for _, r in rows])
    out.summary.update(sigma_min_decreasing=bool(np.all(np.diff([r.sigma_min for _, r in rows]) < 0)))
    out.plot("lipschitz", "N", "C_emp", "Empirical Lipschitz constant", "N", "C_emp", logy=True)
    out.plot("lipschitz", "N", "sigma_min", "Jacobian sigma_min", "N", "sigma_min", logy=True)


def _cmd_instability(cfg, out):
    rows = _sweep(cfg, lambda op, N: instability_experiment(
        op, N, cfg.delta, cfg.sample_pairs, cfg.seed, sampler=cfg.sampler))
    Ns = [N for N, _ in rows]
    mins = np.array([r.min_ratio for _, r in rows])
    out.table("instability", N=Ns, min_ratio=mins, log_min_ratio=np.log(mins))
    if len(rows) == 1:
        r = rows[0][1]
        out.table("ratios", k=np.arange(1, len(r.ratios) + 1), ratio=r.ratios,
                  prefix_min=r.prefix_min)
    out.summary.update(fit=_fit(Ns, np.log(mins)), sampler=cfg.sampler)
    out.plot("instability", "N", "min_ratio", "Minimal DtN separation", "N",
             "min ratio", logy=True)


SUBCOMMANDS = {
    "spectrum": _cmd_spectrum,
    "forward": _cmd_forward,
    "dtn": _cmd_dtn,
    "runge-curve": _cmd_runge_curve,
    "density": _cmd_density,
    "reconstruct": _cmd_reconstruct,
    "lipschitz": _cmd_lipschitz,
    "instability": _cmd_instability,
}


def _reason(exc: BaseException) -> str:
    code = getattr(exc, "exit_code", 3)
    msg = " ".join(str(exc).split())
    return f"fraccal: exit={code} error={type(exc).__name__} reason={msg}"


def _write(out: _Outcome, outdir: Path, record: dict, plot: bool):
    files = {}
    for name, cols in out.tables.items():
        write_csv(outdir / f"{name}.csv", cols)
        files[name] = f"{name}.csv"
    if plot:
        for table, x, y, title, xl, yl, logy in out.plots:
            cols = out.tables[table]
            name = table if y == _first_y(out, table) else f"{table}_{y}"
            atomic_write(outdir / f"{name}.svg",
                         svg_line_chart(cols[x], cols[y], title=title, xlabel=xl,
                                        ylabel=yl, logy=logy))
            files[f"{name}.svg"] = f"{name}.svg"
    record["tables"] = files
    write_json(outdir / "record.json", record)


def _first_y(out, table):
    return next(p[2] for p in out.plots if p[0] == table)


def run(subcommand: str, cfg: ExperimentConfig, outdir, plot: bool = False) -> int:
    """Run one experiment and write its artifacts; returns the exit code."""
    outdir = Path(outdir)
    problems = cfg.problems()
    if problems:
        for name, detail in problems:
            print(f"fraccal: exit=1 error={name} reason={detail}", file=sys.stderr)
        return 1
    out = _Outcome()
    record = {"artifact": "fraccal", "version": __version__, "subcommand": subcommand,
              "config": cfg.to_dict(), "seed": cfg.seed}
    t0 = time.perf_counter()
    code = 0
    try:
        SUBCOMMANDS[subcommand](cfg, out)
        record["status"] = "ok"
    except FracCalError as exc:
        code = exc.exit_code
        record["status"] = "error"
        record["error"] = {"type": type(exc).__name__, "message": str(exc), "exit": code}
        print(_reason(exc), file=sys.stderr)
    record["wall_clock_s"] = time.perf_counter() - t0
    record["summary"] = out.summary
    record["provenance"] = out.provenance
    if code in (0, 2) or out.tables:
        _write(out, outdir, record, plot)
    return code


def validate(cfg: ExperimentConfig) -> list:
    """Dry-run checks; returns ``(error name, detail)`` items (empty when valid)."""
    items = list(cfg.problems())
    if items:
        return items
    try:
        op = _operator(cfg)
    except ConfigError as exc:
        return [(type(exc).__name__, str(exc))]
    lat = op.lattice
    lam1 = dirichlet_spectrum(op, Potential.zero(op)).lambda_1
    bound = min(0.5 * lam1, 1.0)
    if not 0 < cfg.delta <= bound:
        items.append((DeltaTooLarge.__name__,
                      f"delta={cfg.delta} exceeds min(lambda_1/2, 1) = {bound:.6g}"))
    Ns = sorted(set(cfg.sweep) | {cfg.N})
    span = None
    for N in Ns:
        try:
            sp = make_basis(lat, cfg.basis, N, strict=cfg.strict_partition)
        except ConfigError as exc:
            items.append((type(exc).__name__, str(exc)))
            continue
        if N == cfg.N:
            span = sp
    if span is not None:
        if len(cfg.a_true) != span.m:
            items.append(("ConfigError", f"a_true has {len(cfg.a_true)} entries, m={span.m}"))
        try:
            pairs = choose_test_pairs(span, cfg.s, op)
            lim = 0.5 / (pairs.condM * pairs.L0)
            if cfg.epsilon > lim:
                items.append((AbsorptionViolated.__name__,
                              f"epsilon={cfg.epsilon} exceeds 1/(2 condM L0) = {lim:.6g}"))
        except FracCalError as exc:
            items.append((type(exc).__name__, str(exc)))
    if cfg.kernel_index > len(lat.omega_loc):
        items.append(("ConfigError", f"kernel_index={cfg.kernel_index} too large"))
    return items


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fraccal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fraccal {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in list(SUBCOMMANDS) + ["validate"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat JSON experiment file (defaults if omitted)")
        if name != "validate":
            sp.add_argument("--out", default=os.path.join("fraccal-out", name))
            sp.add_argument("--plot", action="store_true")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--N", type=int)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--pairs", type=int, dest="sample_pairs")
        sp.add_argument("--eps", type=float, dest="epsilon")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--s", type=float)
        sp.add_argument("--h", type=float)
        sp.add_argument("--sweep", help="comma-separated N values")
        sp.add_argument("--sampler", choices=("screened", "uniform"))
        sp.add_argument("--policy", choices=("strict", "floor"))
        if name == "reconstruct":
            sp.add_argument("--mode", choices=("oracle", "fixed-point", "cauchy"))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        changes = {k: getattr(args, k) for k in
                   ("seed", "N", "delta", "sample_pairs", "epsilon", "trials", "s", "h",
                    "sampler", "policy", "mode") if getattr(args, k, None) is not None}
        if args.sweep is not None:
            changes["sweep"] = [int(v) for v in args.sweep.split(",") if v.strip()]
        elif "N" in changes:
            changes["sweep"] = []
        cfg = cfg.replace(**changes)
    except ConfigError as exc:
        print(_reason(exc), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"fraccal: exit=1 error=ConfigError reason={exc}", file=sys.stderr)
        return 1

    if args.subcommand == "validate":
        items = validate(cfg)
        if items:
            for name, detail in items:
                print(f"fraccal: exit=1 error={name} reason={' '.join(detail.split())}",
                      file=sys.stderr)
            return 1
        print("OK")
        return 0
    return run(args.subcommand, cfg, args.out, plot=args.plot)


if __name__ == "__main__":
    sys.exit(main())
