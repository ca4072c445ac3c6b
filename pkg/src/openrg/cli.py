"""Command-line front end: ``verify``, ``spectrum`` and ``solve``.

Exit codes: 0 all checks pass, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from . import __version__
from .algebra import (
    corrupted_r_matrix, identity_threshold, r_matrix, rel_residual, structure_report, transfer_matrix,
)
from .bethe.equations import conserved_weighted_sum, weighted_sum_closed_form
from .bethe.pipeline import solve_state, spectrum_match
from .bethe.roots import BetheRoots
from .bethe.solvers import continuation_solve
from .config import ConfigError, RunConfig, load_config
from .errors import ConditioningError, ConvergenceError, DomainError
from .manybody import (
    commutator_residuals, exact_spectrum, gauge_chain_residuals, hamiltonian, hamiltonian_sum_residual,
    quasiclassical_check, second_family_residual, tau_stars, u1_residual,
)
from .report import csv_text, dumps, write_atomic

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
FIXED_CLOCK = "1970-01-01T00:00:00Z"
POLE_MARGIN = 1e-3
QC_ETAS = (1e-2, 5e-3)


def _row(name: str, residual: float, threshold: float) -> dict:
    return {"name": name, "residual": float(residual), "threshold": float(threshold),
            "passed": bool(np.isfinite(residual) and residual < threshold)}


def _samples(rng: np.random.Generator, cfg: RunConfig) -> list[tuple[complex, complex]]:
    eps = cfg.model.eps
    poles = np.concatenate([[0.0, cfg.eta], eps, -eps])
    out = []
    while len(out) < cfg.samples:
        u, v = rng.normal(size=2) + 1j * rng.normal(size=2)
        if min(np.min(np.abs(u - poles)), np.min(np.abs(v - poles))) > POLE_MARGIN:
            out.append((complex(u), complex(v)))
    return out


def cmd_verify(cfg: RunConfig) -> tuple[int, dict]:
    """Algebraic and conserved-operator identity suite."""
    rng = np.random.default_rng(cfg.seed)
    chain, bp, p, ep = cfg.chain(), cfg.boundary(), cfg.model, cfg.expansion
    L = p.length
    r_fn = corrupted_r_matrix() if cfg.corrupt_r else r_matrix
    sr = structure_report(chain, bp, _samples(rng, cfg), r_fn=r_fn)
    rows = [_row(r.name, r.residual, r.threshold) for r in sr.rows]
    notes = []
    for name, value in commutator_residuals(p).items():
        rows.append(_row(name, value, 1e-10))
    rows.append(_row("hamiltonian_sum", hamiltonian_sum_residual(p), 1e-12))
    rows.append(_row("u1_at_zero_gamma", u1_residual(replace(p, Gamma=0.0)), 1e-14))
    x = rng.normal(size=L) + 1j * rng.normal(size=L)
    total = weighted_sum_closed_form(x, p)
    rows.append(_row("sum_rule", abs(conserved_weighted_sum(x, p) - total) / abs(total), 1e-10))
    if L <= 4:
        rows.append(_row("second_family", max(second_family_residual(j, chain, ep) for j in range(1, L + 1)),
                         identity_threshold(L)))
    else:
        notes.append("second_family skipped (L > 4)")
    if L <= 3:
        res = [gauge_chain_residuals(j, p.eps, ep.xi, p.alpha, p.gamma, p.lam) for j in range(1, L + 1)]
        for key in ("gauge", "chain", "reduction"):
            rows.append(_row(f"gauge_{key}", max(r[key] for r in res), 1e-12))
        rows.append(_row("quasiclassical", max(quasiclassical_check(j, chain, ep, QC_ETAS)
                                               for j in range(1, L + 1)), 1e-5))
    else:
        notes.append("gauge chain and quasi-classical rows skipped (L > 3)")
    # reported, not asserted: the parity of t(u) is not one of the checked identities
    probes = {"transfer_parity": max(rel_residual(transfer_matrix(-u, chain, bp), transfer_matrix(u, chain, bp))
                                     for u, _ in _samples(rng, replace(cfg, samples=3)))}
    passed = all(r["passed"] for r in rows)
    return (EXIT_OK if passed else EXIT_NUMERIC), {"rows": rows, "samples": sr.samples, "notes": notes,
                                                   "probes": probes}


def _roots_json(roots: BetheRoots | None):
    return None if roots is None else list(roots.squared_roots)


def cmd_spectrum(cfg: RunConfig) -> tuple[int, dict, str | None]:
    """Bethe energies of every ED eigenstate."""
    if cfg.model.Gamma == 0:
        print("warning: Gamma = 0, using u(1)-sector matching", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = spectrum_match(cfg.model, seed=cfg.seed, energy_tol=cfg.tol, residual_tol=cfg.residual_tol,
                             cond_cap=cfg.cond_cap)
    records = [{
        "index": r.index, "energy_ed": r.energy_ed, "energy_bethe": r.energy_bethe,
        "abs_error": r.abs_error, "rel_error": r.rel_error, "bae_residual": r.bae_residual,
        "squared_roots": _roots_json(r.roots), "provenance": list(r.provenance),
        "conserved_ed": r.conserved_ed, "conserved_gap": r.conserved_gap,
        "finite_roots": r.finite_roots, "matched": r.matched, "diagnostics": r.diagnostics,
    } for r in rep.records]
    summary = {"states": len(rep.records), "matched": rep.matched_count, "max_rel_error": rep.max_rel_error,
               "max_residual": rep.max_residual, "mode": rep.mode,
               "unmatched": [r.index for r in rep.unmatched]}
    table = None
    if cfg.csv:
        table = csv_text(["state", "E_ED", "E_Bethe_re", "E_Bethe_im", "abs_dE", "rel_dE", "residual"],
                         [(r.index, r.energy_ed, r.energy_bethe.real, r.energy_bethe.imag, r.abs_error,
                           r.rel_error, r.bae_residual) for r in rep.records])
    ok = rep.passed and rep.max_rel_error < cfg.tol
    return (EXIT_OK if ok else EXIT_NUMERIC), {"summary": summary, "records": records,
                                               "notes": list(rep.notes)}, table


def _point_json(pt, p) -> dict:
    out = {"Gamma": pt.Gamma, "energy": pt.energy, "squared_roots": _roots_json(pt.roots),
           "residual": pt.roots.residual_norm, "escaped": list(pt.escaped),
           "collisions": [list(c) for c in pt.collisions]}
    if p.length <= 10:
        ed = np.linalg.eigvalsh(hamiltonian(replace(p, Gamma=pt.Gamma)))
        k = int(np.argmin(np.abs(ed - pt.energy)))
        out["energy_ed_nearest"] = float(ed[k])
        out["energy_ed_gap"] = float(abs(ed[k] - pt.energy))
    return out


def cmd_solve(cfg: RunConfig) -> tuple[int, dict]:
    """Track one state along a Gamma path without ED beyond the seed."""
    p = cfg.model
    path = cfg.gamma_path or (p.Gamma,)
    start = replace(p, Gamma=path[0])
    info: dict = {"path": list(path)}
    if cfg.roots is not None:
        seeds = BetheRoots(cfg.roots)
        info["seed_source"] = "config"
    else:
        ed = exact_spectrum(hamiltonian(start), tau_stars(start), seed=cfg.seed)
        try:
            sol = solve_state(ed.conserved_eigenvalues[cfg.state], start, cond_cap=cfg.cond_cap,
                              residual_tol=cfg.residual_tol)
        except (ConditioningError, DomainError) as exc:
            info["error"] = f"seed reconstruction failed: {exc}"
            return EXIT_NUMERIC, {**info, "points": []}
        seeds = sol.roots
        info["seed_source"] = f"ED state {cfg.state}"
        if not seeds.residual_norm < cfg.residual_tol:
            info["error"] = f"seed residual {seeds.residual_norm:.3g} above tolerance"
            return EXIT_NUMERIC, {**info, "points": []}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            points = continuation_solve(p, path, seeds)
    except (ConvergenceError, DomainError) as exc:
        partial = getattr(exc, "path", [])
        info["error"] = f"{type(exc).__name__}: {exc}"
        info["last_good_gamma"] = getattr(exc, "last", None)
        stalled = getattr(exc, "stalled", None)
        if stalled is not None:
            info["stalled_point"] = _point_json(stalled, p)
        return EXIT_NUMERIC, {**info, "points": [_point_json(pt, p) for pt in partial]}
    pts = [_point_json(pt, p) for pt in points]
    flags = [f"Gamma={pt.Gamma:.17g}: " + ", ".join(
        (["roots escaping " + str(list(pt.escaped))] if pt.escaped else [])
        + (["root collision " + str([list(c) for c in pt.collisions])] if pt.collisions else []))
        for pt in points if pt.escaped or pt.collisions]
    complete = len(points) == len(path)
    residual_ok = all(pt.roots.residual_norm < cfg.residual_tol for pt in points)
    if not complete:
        flags.append(f"path stopped at Gamma={points[-1].Gamma:.17g}")
    if not residual_ok:
        flags.append("residual above tolerance")
    ok = complete and residual_ok and not flags
    return (EXIT_OK if ok else EXIT_NUMERIC), {**info, "points": pts, "diagnostics": flags}


def _echo(cfg: RunConfig) -> dict:
    """Config echoed into the report; output locations are left out so reports can be diffed."""
    run = {k: v for k, v in cfg.raw["run"].items() if k not in ("out", "csv")}
    return {**cfg.raw, "run": run}


COMMANDS = {"verify": cmd_verify, "spectrum": cmd_spectrum, "solve": cmd_solve}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="seed of the single random generator")
    common.add_argument("--tol", type=float, help="relative energy tolerance")
    common.add_argument("--out", help="JSON report path (default: stdout)")
    common.add_argument("--csv", help="CSV table path (spectrum only)")
    common.add_argument("--cap", type=int, help="largest admissible L")
    common.add_argument("--fixed-clock", action="store_true", help="write a fixed timestamp")
    parser = argparse.ArgumentParser(prog="openrg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "tol": args.tol, "out": args.out, "csv": args.csv, "cap": args.cap}
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    table = None
    result = COMMANDS[args.command](cfg)
    if args.command == "spectrum":
        code, body, table = result
    else:
        code, body = result
    stamp = FIXED_CLOCK if args.fixed_clock else datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    report = {"command": args.command, "version": __version__, "seed": cfg.seed, "timestamp": stamp,
              "config": _echo(cfg), "exit_code": code, "status": "pass" if code == EXIT_OK else "fail", **body}
    text = dumps(report)
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)
    if table is not None:
        write_atomic(cfg.csv, table)
    if code != EXIT_OK:
        print(f"{args.command}: numerical check failed (see report)", file=sys.stderr)
    return code
