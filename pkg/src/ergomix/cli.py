"""Command-line batch runner.

``ergomix --config PATH [--output DIR] [--seed N]`` runs one experiment,
writes its CSV tables, ``summary.txt`` and ``provenance.txt`` into the
output directory and exits with 0 (all verdicts pass), 1 (a verdict
failed), 2 (bad configuration) or 3 (runtime error).
"""
from __future__ import annotations

import argparse
import io
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config, serialize
from .conjugation import build_conjugation, conjugate_map
from .grid import default_seed, half_nodes, seed_density, unit_nodes
from .laminar import (build_laminar, check_partition_comparability, check_v_ode,
                      estimate_distortion)
from .limits import (birkhoff_distribution, build_hitting_partition, is_farey,
                     residue_observable, simulate_residue_distribution)
from .maps import HALF_LINE, UNIT_INTERVAL, build_builtin, check_assumptions, verify_invariant_density
from .mixing import run_ggm_counterexample, run_glm2, run_llm, slicing_decomposition
from .observables import constant, estimate_av, sin2_phi, sin_phi
from .transfer import iterate_transfer

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
RESIDUE_TABLE = 2 ** 20

Verdict = Tuple[str, bool, str]


class Outcome:
    """Collected CSV tables and verdict lines of one run."""

    def __init__(self):
        self.tables: Dict[str, str] = {}
        self.verdicts: List[Verdict] = []

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.verdicts.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.verdicts)


def _csv(header: str, rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _nodes(cfg: ExperimentConfig, kind: str) -> np.ndarray:
    n = cfg.numerics.grid_size
    return unit_nodes(n) if kind == UNIT_INTERVAL else half_nodes(n)


def _density(cfg: ExperimentConfig, m, which: str = ""):
    return seed_density(m, which or cfg.seed_density or default_seed(m), _nodes(cfg, m.kind))


_F_OF_LOG = {"sin_phi": np.sin, "sin2_phi": lambda t: np.sin(t) ** 2,
             "constant": lambda t: np.ones_like(np.asarray(t, dtype=float))}


def _observable(cfg: ExperimentConfig, m):
    if cfg.observable == "sin_phi":
        return sin_phi(m)
    if cfg.observable == "sin2_phi":
        return sin2_phi(m)
    if cfg.observable == "constant":
        return constant(1.0)
    if m.kind != UNIT_INTERVAL:
        raise ConfigError("observable 'residue' needs a unit-interval map")
    return residue_observable(cfg.numerics.q, build_hitting_partition(m, RESIDUE_TABLE))


def _half_line(m):
    return m if m.kind == HALF_LINE else conjugate_map(m, build_conjugation(m.density))


# ------------------------------------------------------------ experiments

def _exp_check_assumptions(cfg, m, out: Outcome):
    rep = check_assumptions(m, resolution=max(64, cfg.numerics.grid_size // 4))
    rows = []
    for name, st in rep.status.items():
        x, msg = rep.witnesses.get(name, ("", ""))
        rows.append((name, st, x, msg.replace(",", ";")))
    out.tables["assumptions"] = _csv("assumption,status,x,message", rows)
    for name in rep.failures():
        out.check(f"{name} holds", False, rep.witnesses[name][1])
    if rep.ok:
        out.check("all assumptions hold", True)


def _exp_invariant_density(cfg, m, out: Outcome):
    res = verify_invariant_density(m, cfg.numerics.grid_size)
    tol = 1e-10 if m.kind == UNIT_INTERVAL else 1e-8
    x = _nodes(cfg, m.kind)[1:]
    h = m.density.h(x) if m.kind == UNIT_INTERVAL else np.ones_like(x)
    out.tables["invariant_density"] = _csv("x,h", zip(x, h))
    out.check("invariant density residual", res <= tol, f"{res:.3g} <= {tol:g}")


def _exp_transfer_iterate(cfg, m, out: Outcome):
    g = _density(cfg, m)
    its, rep = iterate_transfer(m, g, cfg.numerics.n_max, stride=cfg.numerics.stride,
                                track_shape=False)
    out.tables["transfer_iterate"] = its[-1].to_csv()
    drift = [0.0] + rep.mass_drift
    out.tables["mass_drift"] = _csv("n,mass_drift", enumerate(drift))
    out.check("mass conserved", not rep.failed, f"max drift {max(drift):.3g}")


def _exp_persistent_monotonicity(cfg, m, out: Outcome):
    g = _density(cfg, m)
    n = cfg.numerics.n_max
    its, rep = iterate_transfer(m, g, n)
    rows = [(k, int(k <= rep.monotone_up_to), int(k <= rep.concave_up_to)) for k in range(rep.n + 1)]
    out.tables["persistent_monotonicity"] = _csv("n,monotone,concave", rows)
    out.check("monotone for every iterate", rep.monotone_up_to == n,
              f"monotone up to n={rep.monotone_up_to}")
    if m.kind == UNIT_INTERVAL:
        out.check("concave for every iterate", rep.concave_up_to == n,
                  f"concave up to n={rep.concave_up_to}")


def _exp_glm2(cfg, m, out: Outcome):
    s = run_glm2(m, _observable(cfg, m), _density(cfg, m), cfg.numerics.n_max)
    out.tables["glm2"] = s.to_csv()
    out.check("Holder bound", s.holder_ok())
    out.check("residual trend converging", s.verdict == "converging",
              f"{s.verdict}; final residual {s.residuals[-1]:.4g}")


def _exp_llm(cfg, m, out: Outcome):
    s = run_llm(m, cfg.numerics.delta, _density(cfg, m), cfg.numerics.n_max)
    out.tables["llm"] = s.to_csv()
    tail = np.real(s.c_n[len(s.c_n) // 2:])
    out.check("eventually decreasing", bool(np.all(np.diff(tail) <= 1e-3)))
    out.check("correlation trend converging", s.verdict == "converging",
              f"{s.verdict}; final {s.residuals[-1]:.4g}")


def _exp_ggm(cfg, m, out: Outcome):
    F = _observable(cfg, m)
    rows = run_ggm_counterexample(m, F, cfg.n_values(), depth=cfg.numerics.schedule_depth)
    out.tables["ggm_counterexample"] = _csv(
        "n,av_estimate,cauchy_width,av_f2,av_f_squared",
        [(r.n, r.value, r.estimate.cauchy_width, r.av_f2, r.av_f_squared) for r in rows])
    for r in rows:
        out.check(f"n={r.n}: Av((F o T^n) F) near Av(F^2)", abs(r.value - r.av_f2) <= 0.03,
                  f"{r.value:.4f} vs {r.av_f2:.4f}")
        out.check(f"n={r.n}: away from Av(F)^2", abs(r.value - r.av_f_squared) > 0.03,
                  f"{r.value:.4f} vs {r.av_f_squared:.4f}")


def _exp_slicing(cfg, m, out: Outcome):
    rep = slicing_decomposition(m, _observable(cfg, m), _density(cfg, m), cfg.numerics.delta,
                                cfg.numerics.n_max, strict=False)
    out.tables["slicing_bound"] = _csv(
        "delta,n,I1_bound,I2_value,total_bound,actual",
        [(rep.delta, rep.n, rep.I1_bound, rep.I2_value, rep.total_bound, rep.actual)])
    out.check("actual <= I1 bound + |F| I2", rep.holds,
              f"{rep.actual:.4g} <= {rep.total_bound:.4g}")


def _exp_hitting_residues(cfg, m, out: Outcome):
    nm = cfg.numerics
    dist = simulate_residue_distribution(m, _density(cfg, m), nm.q, nm.n_max, nm.N_samples,
                                         cfg.seed, workers=nm.workers or None)
    out.tables["hitting_residues"] = dist.to_csv()
    tv = dist.tv_to_uniform()
    out.check("TV distance to uniform", tv <= 0.02, f"{tv:.4f} <= 0.02")
    est = estimate_av(m, residue_observable(nm.q, build_hitting_partition(m, RESIDUE_TABLE)))
    target = (nm.q - 1) / 2
    av = float(np.real(est.extrapolated))
    out.check("Av(H_q) near (q-1)/2", abs(av - target) <= 0.05, f"{av:.4f} vs {target:g}")


def _exp_birkhoff(cfg, m, out: Outcome):
    if cfg.observable == "residue":
        raise ConfigError("birkhoff needs a d_mu-uniformly continuous observable")
    nm = cfg.numerics
    F = _observable(cfg, m)
    tab = birkhoff_distribution(m, F, nm.k_schedule, nm.n_max, _density(cfg, m), nm.N_samples,
                                cfg.thetas(), cfg.seed, workers=nm.workers or None,
                                f_of_log=_F_OF_LOG[cfg.observable] if is_farey(m) else None)
    out.tables["birkhoff"] = tab.to_csv()
    out.check("characteristic function sup error", tab.sup_error <= 0.05,
              f"{tab.sup_error:.4f} <= 0.05 (k={tab.k})")


def _exp_laminar(cfg, m, out: Outcome):
    ls = build_laminar(_half_line(m), cfg.numerics.k_max)
    out.tables["laminar_scan"] = ls.to_csv()
    ode = check_v_ode(ls)
    ident = float(np.max(np.abs(ls.lambda_I() - ls.u(ls.b[1:])) / ls.lambda_I()))
    out.check("v' = u o v", ode <= 1e-6, f"{ode:.3g}")
    out.check("lambda(I_-k) = u(b_k)", ident <= 1e-9, f"relative {ident:.3g}")
    if ls.k_max >= 50:
        c1 = check_partition_comparability(ls)
        out.check("bounded multiplicity", ls.multiplicity() <= int(np.ceil(c1)) + 1,
                  f"C1_hat {c1:.4g}, multiplicity {ls.multiplicity()}")


def _exp_distortion(cfg, m, out: Outcome):
    nm = cfg.numerics
    hm = _half_line(m)
    ls = build_laminar(hm, max(nm.k_max, nm.j_max))
    rep = estimate_distortion(hm, ls, range(1, nm.j_max + 1), nm.pair_samples, cfg.seed)
    out.tables["distortion_scan"] = rep.to_csv()
    out.check("chain bound with C' = 1.01 C'_hat", rep.ratio_check <= 0.0,
              f"C'_hat {rep.global_sup:.4g}")
    if nm.j_max >= 50:
        out.check("C'_hat flat in j", rep.flat_in_j())


EXPERIMENT_RUNNERS: Dict[str, Callable] = {
    "check_assumptions": _exp_check_assumptions,
    "invariant_density": _exp_invariant_density,
    "transfer_iterate": _exp_transfer_iterate,
    "persistent_monotonicity": _exp_persistent_monotonicity,
    "glm2": _exp_glm2,
    "llm": _exp_llm,
    "ggm_counterexample": _exp_ggm,
    "slicing_bound": _exp_slicing,
    "hitting_residues": _exp_hitting_residues,
    "birkhoff": _exp_birkhoff,
    "laminar_scan": _exp_laminar,
    "distortion_scan": _exp_distortion,
}


# ---------------------------------------------------------------- driver

def _provenance(cfg: ExperimentConfig) -> str:
    lines = [f"ergomix {__version__}", f"python {platform.python_version()}",
             f"numpy {np.__version__}", f"scipy {scipy.__version__}",
             f"seed {cfg.seed}", "", "# configuration", serialize(cfg)]
    return "\n".join(lines)


def execute(cfg: ExperimentConfig) -> Outcome:
    """Run the configured experiment without touching the filesystem."""
    m = build_builtin(cfg.family, **cfg.map_params())
    out = Outcome()
    EXPERIMENT_RUNNERS[cfg.experiment](cfg, m, out)
    return out


def run(cfg: ExperimentConfig) -> int:
    """Run, write artifacts into ``cfg.output_dir`` and return the exit status."""
    try:
        outcome = execute(cfg)
    except ConfigError:
        raise
    except Exception as exc:  # module errors surface with their context
        _write_failure(cfg, exc)
        return EXIT_RUNTIME
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in outcome.tables.items():
        (outdir / f"{name}.csv").write_text(text)
    lines = [f"experiment {cfg.experiment} on {cfg.family}"]
    for name, ok, detail in outcome.verdicts:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    lines.append(f"overall {'PASS' if outcome.passed else 'FAIL'}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    (outdir / "provenance.txt").write_text(_provenance(cfg))
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def _write_failure(cfg: ExperimentConfig, exc: Exception) -> None:
    msg = f"{cfg.experiment} on {cfg.family} failed: {type(exc).__name__}: {exc}"
    print(msg, file=sys.stderr)
    try:
        outdir = Path(cfg.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "summary.txt").write_text(f"ERROR {msg}\n")
        (outdir / "provenance.txt").write_text(_provenance(cfg))
    except OSError:
        pass


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ergomix", description="Run one ergomix experiment.")
    ap.add_argument("--config", required=True, help="INI experiment description")
    ap.add_argument("--output", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="seed override")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        if args.output:
            cfg = replace(cfg, output_dir=args.output)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError(f"seed={args.seed}: must be a 64-bit unsigned integer")
            cfg = replace(cfg, seed=args.seed)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
