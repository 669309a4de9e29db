"""Command-line entry point ``gfc``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks
from . import contact as ct
from . import evolution as ev
from .config import ConfigError, RunConfig, load_config, preset, with_overrides
from .geometry import laplacian_G
from .model import ObservableSet, gibbs_state
from .spectral import (
    eigendecompose,
    lambda1_sensitivity,
    slow_group,
    spectrum_csv,
    tilted_lambda1,
)
from .thermo import ThermoPoint, psi_G

log = logging.getLogger("gfc")

COMMANDS = ("spectrum", "evolve", "contact", "tilted", "verify", "convergence")
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _write_json(path: Path, doc) -> None:
    _write(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


class _Context:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.gibbs = gibbs_state(cfg.potential, self.grid)
        self.lap = laplacian_G(self.gibbs)
        self.spec = eigendecompose(self.lap, k=cfg.modes)
        self.B = ObservableSet.from_expressions(cfg.observables, self.grid)

    @property
    def out(self) -> Path:
        return Path(self.cfg.output_dir)


def cmd_spectrum(ctx: _Context) -> bool:
    spec = ctx.spec
    _write(ctx.out / "spectrum.csv", spectrum_csv(spec, ctx.cfg.sample_x))
    ok = bool(np.all(spec.residuals <= ctx.cfg.tolerance("spectrum_eigen_residual", 1e-8)))
    ok &= spec.gram_residual <= ctx.cfg.tolerance("spectrum_gram", 1e-10)
    ok &= abs(spec.eigenvalues[0]) <= ctx.cfg.tolerance("spectrum_lambda0", 1e-10)
    return ok


def cmd_evolve(ctx: _Context, with_coefficients: bool = False) -> bool:
    cfg = ctx.cfg
    state0 = checks.initial_state(cfg, ctx.spec)
    coeffs = ev.expand(state0, ctx.spec)
    cn = ev.crank_nicolson(state0, ctx.lap, cfg.time.dt, cfg.time.t_final, cfg.time.checkpoints)
    fields = ["t"]
    for tag in ("spectral", "cn"):
        fields += [f"{tag}_{k}" for k in ("mass", "lyapunov", "free_energy", "entropy", "energy")]
    fields.append("sup_difference")
    if with_coefficients:
        fields += [f"a_{s}" for s in range(1, ctx.spec.k)]
    lines = [",".join(fields)]
    worst = 0.0
    lyap, free = [], []
    for st in cn:
        sp_state = ev.propagate(coeffs, st.t)
        a, b = ev.sample(sp_state), ev.sample(st)
        diff = float(np.max(np.abs(sp_state.phi - st.phi)))
        worst = max(worst, diff)
        lyap.append(b.lyapunov)
        free.append(b.free_energy)
        row = [st.t]
        for smp in (a, b):
            row += [smp.mass, smp.lyapunov, smp.free_energy, smp.entropy, smp.energy]
        row.append(diff)
        if with_coefficients:
            row += list(ev.expand(st, ctx.spec).a[1:])
        lines.append(",".join(_fmt(v) for v in row))
    _write(ctx.out / "trajectory.csv", "\n".join(lines) + "\n")
    mass_drift = max(abs(st.mass - state0.mass) for st in cn)
    ok = mass_drift <= cfg.tolerance("evolution_mass_drift", 1e-10)
    ok &= (len(lyap) < 2 or np.diff(lyap).max() <= cfg.tolerance("evolution_lyapunov_monotone", 1e-12))
    ok &= (len(free) < 2 or -np.diff(free).min() <= cfg.tolerance("evolution_free_energy_monotone", 1e-10))
    log.info("max |spectral - CN| = %.3e, mass drift %.3e", worst, mass_drift)
    return bool(ok)


def _times(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.time.t_final, max(cfg.time.checkpoints, 2))


def cmd_contact(ctx: _Context) -> bool:
    cfg = ctx.cfg
    q = np.array(cfg.q)
    state0 = checks.initial_state(cfg, ctx.spec)
    times = _times(cfg)
    tol = cfg.tolerance("contact_equivalence_z", 1e-10)
    rep = ct.equivalence_check(ctx.spec, ctx.B, q, state0, times, tolerance=tol)
    psi = psi_G(q, ctx.B, ctx.gibbs, order=1)
    start = ThermoPoint(p=rep.p_fp[0], q=q, z=rep.z_fp[0])
    traj = ct.closed_form_trajectory(start, rep.gamma, psi.value, psi.gradient, times)
    _write(ctx.out / "contact.csv", traj.to_csv())
    _write_json(ctx.out / "equivalence.json", rep.to_dict())
    return rep.passed


def cmd_tilted(ctx: _Context) -> bool:
    cfg = ctx.cfg
    P, B, grid = cfg.potential, ctx.B, ctx.grid
    q0 = np.array(cfg.q)
    direction = q0 if np.any(q0 != 0) else np.ones_like(q0)
    scan = [direction * s for s in np.linspace(-2.0, 2.0, 9)] if np.any(q0 != 0) else \
        [direction * s for s in np.linspace(-1.0, 1.0, 9)]

    def row(q):
        return {"q": q.tolist(), "lambda1": tilted_lambda1(P, B, q, grid),
                "dlambda1_dq": lambda1_sensitivity(P, B, q, grid).tolist()}

    if cfg.parallel:
        with ThreadPoolExecutor() as pool:
            table = list(pool.map(row, scan))
    else:
        table = [row(q) for q in scan]

    beta = P.beta
    group = slow_group(ctx.spec)
    gamma = float(ctx.spec.eigenvalues[group[0]] / beta)
    psi = ct.psi_field(B, ctx.gibbs)
    lam_fn = lambda q: (tilted_lambda1(P, B, q, grid), lambda1_sensitivity(P, B, q, grid))  # noqa: E731
    tilted = ct.TiltedHamiltonian(beta, lam_fn, psi)
    relaxed = ct.RelaxationHamiltonian(gamma, psi)
    value, grad = psi(q0)
    start = ThermoPoint(p=grad + 0.5, q=q0, z=value + 0.5)
    dt = cfg.time.dt
    steps = int(round(cfg.time.t_final / dt))
    t, dz, dp = ct.paired_differences(tilted, relaxed, start, dt, steps)
    stride = max(1, steps // max(cfg.time.checkpoints - 1, 1))
    idx = list(range(0, steps + 1, stride))
    doc = {
        "q": q0.tolist(),
        "gamma_1": gamma,
        "lambda1_table": table,
        "flow_difference": {
            "t": [float(t[i]) for i in idx],
            "abs_zdot_difference": [float(dz[i]) for i in idx],
            "max_abs_pdot_difference": [float(dp[i]) for i in idx],
        },
    }
    # differences must shrink after the first checkpoint
    tail_z = [dz[i] for i in idx[1:]]
    tail_p = [dp[i] for i in idx[1:]]
    slack = 1e-15
    mono = all(b <= a + slack for a, b in zip(tail_z, tail_z[1:])) and all(
        b <= a + slack for a, b in zip(tail_p, tail_p[1:]))
    doc["differences_monotone_after_transient"] = bool(mono)
    checks_ok = mono
    if checks._is_gaussian_x(cfg):
        exact = beta / P.mu
        lam_err = max(abs(r["lambda1"] - exact) / exact for r in table)
        sens = max(max(abs(v) for v in r["dlambda1_dq"]) for r in table)
        doc["max_lambda1_relative_error"] = lam_err
        doc["max_abs_sensitivity"] = sens
        checks_ok &= lam_err <= cfg.tolerance("tilted_lambda1", 1e-3)
        checks_ok &= sens <= cfg.tolerance("tilted_lambda1_sensitivity", 1e-3)
    doc["pass"] = bool(checks_ok)
    _write_json(ctx.out / "tilted.json", doc)
    return bool(checks_ok)


def cmd_verify(cfg: RunConfig) -> bool:
    suite = checks.verify(cfg)
    known = {c.name for c in suite.checks}
    unknown = sorted(set(cfg.tolerances) - known - {"spectrum_gram"})
    if unknown:
        raise ConfigError(f"tolerances.{unknown[0]}", "not the name of a check")
    doc = {
        "all_pass": suite.passed,
        "checks": [c.to_dict() for c in suite.checks],
    }
    _write_json(Path(cfg.output_dir) / "verify.json", doc)
    failed = [c.name for c in suite.checks if not c.passed]
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
    return suite.passed


def cmd_convergence(cfg: RunConfig) -> bool:
    rows = checks.convergence(cfg)
    _write(Path(cfg.output_dir) / "convergence.csv", checks.convergence_csv(rows))
    failed = sorted({r.quantity for r in rows if not r.passed})
    if failed:
        log.error("convergence order outside 2.0 +/- 0.2 for: %s", ", ".join(failed))
    return not failed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gfc",
        description="Fokker-Planck relaxation, weighted-Laplacian spectra and contact dynamics on a 1-D grid.",
    )
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--preset", choices=["gaussian"], help="built-in configuration")
    p.add_argument("--modes", type=int, metavar="K", help="number of eigenpairs")
    p.add_argument("--t-final", type=float, metavar="T")
    p.add_argument("--dt", type=float, metavar="DT")
    p.add_argument("--q", metavar="V[,V...]", help="applied field, one value per observable")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--parallel", action="store_true", help="evaluate q-scans and grid studies concurrently")
    p.add_argument("--tolerance-scale", type=float, metavar="S", help="multiply every tolerance by S")
    p.add_argument("--coefficients", action="store_true", help="evolve: also write a_1..a_k columns")
    return p


def _configure_logging() -> None:
    level = os.environ.get("GFC_LOG", "warn").lower()
    if level not in LOG_LEVELS:
        raise ConfigError("GFC_LOG", f"expected one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        cfg = load_config(args.config) if args.config else preset(args.preset)
        q = None
        if args.q is not None:
            try:
                q = [float(v) for v in args.q.split(",")]
            except ValueError as exc:
                raise ConfigError("q", f"could not parse {args.q!r}") from exc
        cfg = with_overrides(
            cfg,
            modes=args.modes,
            t_final=args.t_final,
            dt=args.dt,
            q=q,
            output_dir=args.out,
            tolerance_scale=args.tolerance_scale,
            parallel=args.parallel or None,
        )
        start = time.perf_counter()
        if args.command == "verify":
            ok = cmd_verify(cfg)
        elif args.command == "convergence":
            ok = cmd_convergence(cfg)
        else:
            ctx = _Context(cfg)
            ok = {
                "spectrum": lambda: cmd_spectrum(ctx),
                "evolve": lambda: cmd_evolve(ctx, args.coefficients),
                "contact": lambda: cmd_contact(ctx),
                "tilted": lambda: cmd_tilted(ctx),
            }[args.command]()
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"gfc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if not ok:
        print(f"gfc {args.command}: some checks failed", file=sys.stderr)
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
