"""Command-line front end: verify, derive, evolve, sweep.

Exit codes: 0 success, 1 validation failure, 2 numerical-invariant violation.
Every CSV starts with ``#`` lines holding the canonical configuration.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import models
from .algebra import dump_operator
from .config import RunConfig, fmt, initial_state, load
from .deformed_su2 import verify_algebra
from .effective import LINDBLAD, derive_effective_system, exact_master_equation, reduce_operator
from .errors import (ConfigError, DegenerateDetuningError, EffmasterError, ExtractionError, InvariantViolation,
                     StabilityError, AlgebraError)
from .lindblad import (DensityState, expectation, integrate, lindblad_superop, cross_superop, partial_trace,
                       trace_distance)
from .oracle import fit_superop, hamiltonian_residual, loglog_slope, reduce_superop, spectral_residual

log = logging.getLogger("effmaster")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2
VERIFY_TOL = 1e-10


def build_model(cfg: RunConfig, g: float | None = None):
    params = dict(cfg.params)
    if g is not None:
        params["g"] = g
    return models.PRESETS[cfg.model](**params)


def write_csv(path: Path, cfg: RunConfig, header: list[str], rows, notes: list[str] = ()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        for line in notes:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def out_dir(cfg: RunConfig, override: str | None) -> Path:
    p = Path(override or cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- verify ----------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out: Path) -> int:
    try:
        model, alg = build_model(cfg)
    except ExtractionError as exc:
        write_csv(out / "algebra_report.csv", cfg, ["n_value", "degree", "coeff", "fit_residual"],
                  [(exc.n_value, -1, float("nan"), exc.residual)])
        log.error("%s", exc)
        return EXIT_VALIDATION
    X3 = -alg.X3 if cfg.flip_x3 else alg.X3
    ok, res = verify_algebra(alg.Xp, alg.Xm, X3, alg.N, VERIFY_TOL)
    write_csv(out / "algebra_residuals.csv", cfg, ["check", "residual", "tol", "pass"],
              [(k, v, VERIFY_TOL, int(v <= VERIFY_TOL)) for k, v in res.items()])
    rows = []
    for b in alg.blocks:
        if b.poly_coeffs is None:
            rows.append((b.n_value, -1, float("nan"), float("nan")))
            continue
        for deg, c in enumerate(b.poly_coeffs):
            rows.append((b.n_value, deg, float(c), b.fit_residual))
    write_csv(out / "algebra_report.csv", cfg, ["n_value", "degree", "coeff", "fit_residual"], rows,
              notes=[f"fit_tol = {fmt(alg.fit_tol)}", "degree -1 marks a truncation-tainted block"])
    if not ok:
        for k, v in res.items():
            if v > VERIFY_TOL:
                log.error("algebra check %s failed: residual %.3e", k, v)
        return EXIT_VALIDATION
    return EXIT_OK


# -- derive ------------------------------------------------------------------------

def _derive(cfg: RunConfig, model, alg):
    return derive_effective_system(model, alg, order=cfg.order, apply_rwa=cfg.apply_rwa,
                                   vacuum_reduction=cfg.vacuum or False, frame=cfg.frame, keep_tol=cfg.keep_tol)


def write_effective(eff, cfg: RunConfig, out: Path) -> None:
    dump_operator(eff.H_eff, out / "H_eff.txt", cfg.header_lines() + ["H_eff, column-major vec convention"])
    rows = []
    for k, t in enumerate(eff.dissipators):
        if t.kind == LINDBLAD:
            name = f"op{k:02d}.txt"
            dump_operator(t.left, out / name, [f"jump operator {t.label}"])
        else:
            name = f"op{k:02d}_L.txt|op{k:02d}_R.txt"
            dump_operator(t.left, out / f"op{k:02d}_L.txt", [f"cross term {t.label}, left"])
            dump_operator(t.right, out / f"op{k:02d}_R.txt", [f"cross term {t.label}, right (phase included)"])
        rows.append((t.order_tag, t.rate, t.label, name))
    write_csv(out / "dissipators.csv", cfg, ["order_tag", "rate", "operator_label", "operator_file"], rows,
              notes=["rate multiplies L[C] = 2 C rho C^dag - {C^dag C, rho}; K(A,B) rows are cross terms"])


def cmd_derive(cfg: RunConfig, out: Path) -> int:
    model, alg = build_model(cfg)
    eff = _derive(cfg, model, alg)
    write_effective(eff, cfg, out)
    rho0 = initial_state(model.space, cfg.initial, cfg.support_tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        guard = model.guard.check(rho0.rho)
    report = [
        ("epsilon", eff.epsilon),
        ("Delta", model.Delta),
        ("g", model.g),
        ("guard_formula", model.guard.formula),
        ("guard_ratio", guard),
        ("guard_ok", int(guard < model.guard.threshold)),
        ("constant_scalar", eff.constants.get("scalar", float("nan"))),
        ("hamiltonian_residual", hamiltonian_residual(model, alg)),
        ("spectral_residual", spectral_residual(model, alg)),
    ]
    for n_value, c in sorted(eff.constants.get("per_block", {}).items()):
        report.append((f"constant_block_{fmt(n_value)}", c))
    if eff.frame_part is not None:
        dump_operator(eff.frame_part, out / "frame_part.txt", ["frame rotation removed from H_eff"])
    notes = [str(w.message) for w in caught]
    if cfg.sweep_g:
        eps = [g / model.Delta for g in cfg.sweep_g]
        res = [hamiltonian_residual(model, alg, e) for e in eps]
        report.append(("hamiltonian_slope", loglog_slope(eps, res) if len(eps) > 1 else float("nan")))
        write_csv(out / "oracle_residuals.csv", cfg, ["epsilon", "hamiltonian_residual", "spectral_residual"],
                  [(e, r, spectral_residual(model, alg, e)) for e, r in zip(eps, res)])
    write_csv(out / "derive_report.csv", cfg, ["quantity", "value"], report, notes=notes)
    for n in notes:
        log.warning("%s", n)
    return EXIT_OK


# -- evolve ------------------------------------------------------------------------

def _observables(cfg, model):
    names = cfg.observables or tuple(k for k in ("n_a", "n_b", "S3") if k in model.named_ops)
    missing = [n for n in names if n not in model.named_ops]
    if missing:
        raise ConfigError(f"unknown observables {missing}; have {sorted(model.named_ops)}")
    return names


def run_evolution(cfg: RunConfig, model, alg, effective: bool = True):
    """Exact and effective trajectories plus the comparison table."""
    space = model.space
    rho0 = initial_state(space, cfg.initial, cfg.support_tol)
    me = model.master_equation()
    traj = integrate(me, rho0, cfg.t_final, cfg.dt, cfg.samples, support_tol=cfg.support_tol)
    if not effective:
        return traj, None, None, None
    eff = _derive(cfg, model, alg)
    _, U = exact_master_equation(model, alg)

    def to_effective_picture(state: DensityState) -> np.ndarray:
        r = U @ state.rho @ U.conj().T
        if eff.vacuum_factor is not None:
            r = partial_trace(DensityState(space, r, state.time), [n for n in space.names if n != eff.vacuum_factor]).rho
        return r

    sig0 = DensityState(eff.space, to_effective_picture(rho0), 0.0)
    traj_eff = integrate(eff.master_equation(), sig0, cfg.t_final, cfg.dt, cfg.samples,
                         support_tol=cfg.support_tol)
    comp = []
    F = np.real(np.diag(eff.frame_part)) if eff.frame_part is not None else None
    for st_x, st_e in zip(traj.states, traj_eff.states):
        r = to_effective_picture(st_x)
        if F is not None:
            ph = np.exp(1j * F * st_x.time)
            r = ph[:, None] * r * ph.conj()[None, :]
        comp.append((st_x.time, trace_distance(r, st_e.rho), model.guard.ratio(st_x.rho)))
    return traj, traj_eff, eff, comp


def _traj_rows(traj, ops):
    rows = []
    for st, d in zip(traj.states, traj.diagnostics):
        vals = [np.real(expectation(st.rho, op)) if op is not None else float("nan") for op in ops]
        rows.append((st.time, np.real(np.trace(st.rho)), d["min_eig"], d["purity"], *vals))
    return rows


def cmd_evolve(cfg: RunConfig, out: Path, effective: bool = True) -> int:
    model, alg = build_model(cfg)
    names = _observables(cfg, model)
    traj, traj_eff, eff, comp = run_evolution(cfg, model, alg, effective)
    header = ["t", "trace", "min_eig", "purity", *names]
    note = [f"dt = {fmt(traj.dt)}"]
    write_csv(out / "exact.csv", cfg, header, _traj_rows(traj, [model.named_ops[n] for n in names]), note)
    if traj_eff is not None:
        if eff.vacuum_factor is not None:
            ops = [reduce_operator(model.named_ops[n], model.space, eff.vacuum_factor) for n in names]
        else:
            ops = [model.named_ops[n] for n in names]
        write_csv(out / "effective.csv", cfg, header, _traj_rows(traj_eff, ops), note)
        write_csv(out / "comparison.csv", cfg, ["t", "trace_distance", "guard_ratio"], comp)
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------

def _transferred_rate(model, alg, eff) -> float:
    """Rate of the leading order-2 Lindblad term, refitted from the exactly rotated dissipator."""
    cands = [t for t in eff.dissipators if t.kind == LINDBLAD and t.order_tag == 2]
    if not cands:
        return float("nan")
    main = max(cands, key=lambda t: t.rate)
    me, _ = exact_master_equation(model, alg)
    S = sum(r * lindblad_superop(C) for r, C in me.dissipators)
    basis = {t.label: (lindblad_superop(t.left) if t.kind == LINDBLAD else cross_superop(t.left, t.right))
             for t in eff.dissipators}
    if eff.vacuum_factor is not None:
        S = reduce_superop(S, model.space, eff.vacuum_factor)
        mask = ~eff.space.top_level_mask(2)
        idx = np.flatnonzero(mask)
    else:
        idx = alg.closed_subspace()
    coef, _ = fit_superop(S, basis, idx)
    # basis entries are unit-rate shapes, so the coefficient is the rate itself
    return float(np.real(coef[main.label]))


def sweep_point(args):
    cfg, k, g, out = args
    pdir = Path(out) / f"point_{k:03d}"
    pdir.mkdir(parents=True, exist_ok=True)
    pcfg = cfg.with_updates(params={**cfg.params, "g": g}, sweep_g=())
    model, alg = build_model(pcfg)
    eff = _derive(pcfg, model, alg)
    write_effective(eff, pcfg, pdir)
    hres = hamiltonian_residual(model, alg)
    rate = _transferred_rate(model, alg, eff)
    _, _, _, comp = run_evolution(pcfg, model, alg, True)
    write_csv(pdir / "comparison.csv", pcfg, ["t", "trace_distance", "guard_ratio"], comp)
    return k, g / model.Delta, hres, rate, comp[-1][1]


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if not cfg.sweep_g:
        raise ConfigError("sweep.g is empty")
    jobs = [(cfg, k, g, str(out)) for k, g in enumerate(cfg.sweep_g)]
    results, failed = [], []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(sweep_point, j) for j in jobs]
            for j, f in zip(jobs, futs):
                try:
                    results.append(f.result())
                except EffmasterError as exc:
                    failed.append((j[1], exc))
    else:
        for j in jobs:
            try:
                results.append(sweep_point(j))
            except EffmasterError as exc:
                failed.append((j[1], exc))
    results.sort()
    write_csv(out / "sweep.csv", cfg, ["epsilon", "hamiltonian_residual", "dissipator_rate_fit", "dynamics_error_at_T"],
              [r[1:] for r in results])
    eps = [r[1] for r in results]
    slopes = []
    notes = []
    for name, col in (("hamiltonian_residual", 2), ("dissipator_rate_fit", 3), ("dynamics_error_at_T", 4)):
        if len(results) < 2:
            slopes.append((name, float("nan")))
        else:
            slopes.append((name, loglog_slope(np.abs(eps), [abs(r[col]) for r in results])))
    if len(results) < 2:
        notes.append("fewer than two sweep points: slopes are undefined")
        log.warning("fewer than two sweep points: slopes are undefined")
    write_csv(out / "slopes.csv", cfg, ["quantity", "slope"], slopes, notes)
    for k, exc in failed:
        log.error("sweep point %d failed: %s", k, exc)
    return EXIT_VALIDATION if failed else EXIT_OK


# -- entry point ---------------------------------------------------------------------

COMMANDS = {"verify": cmd_verify, "derive": cmd_derive, "evolve": cmd_evolve, "sweep": cmd_sweep}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="effmaster", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--order", type=int, choices=(1, 2), default=None)
        p.add_argument("--rwa", action="store_true", help="apply the rotating-wave filter")
        p.add_argument("--vacuum-reduce", default=None, metavar="FACTOR",
                       help="reduce onto the vacuum of this factor")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        upd = {}
        if args.order is not None:
            upd["order"] = args.order
        if args.rwa:
            upd["apply_rwa"] = True
        if args.vacuum_reduce:
            upd["vacuum_reduction"] = args.vacuum_reduce
        if args.out:
            upd["out"] = args.out
        cfg = cfg.with_updates(**upd) if upd else cfg
        out = out_dir(cfg, None)
        return COMMANDS[args.command](cfg, out)
    except InvariantViolation as exc:
        log.error("invariant violation at t=%s: %s", exc.time, exc)
        return EXIT_NUMERICAL
    except StabilityError as exc:
        log.error("%s (suggested dt %.6g)", exc, exc.suggested_dt)
        return EXIT_VALIDATION
    except (ConfigError, DegenerateDetuningError, AlgebraError, EffmasterError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
