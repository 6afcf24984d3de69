"""Laminar structure of a half-line map near infinity.

Branch 0 moves a point ``s >= a_1`` down by the gap ``u(s) = s - T_0(s)``.
The function ``w(s) = int_{a_1}^s dt / u(t)`` counts laminar steps in a
continuous way and its inverse ``v`` solves ``v' = u o v``. The backward
orbit ``b_k`` of ``a_1`` under branch 0 cuts the laminar interval into the
pieces ``I_{-k} = [b_{k-1}, b_k)``, which are compared against the pieces
``E_n = [v(n-1), v(n))``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .maps import HALF_LINE, MapModel, solve_increasing

_GL8 = leggauss(8)
_GL16 = leggauss(16)
ROOT_RTOL = 1e-13


class LaminarError(ValueError):
    pass


def gap_function(m: MapModel) -> Callable:
    if m.gap is not None:
        return m.gap
    f = m.branches[0].forward
    return lambda s: np.asarray(s, dtype=float) - f(s)


class _StepCounter:
    """``w`` tabulated by cumulative Gauss rules, with a Newton inverse."""

    def __init__(self, u: Callable, a1: float, need: float, width: float = 0.01):
        self.u, self.a1, self.width = u, a1, width
        edges = [a1]
        cum = [0.0]
        while cum[-1] <= need:
            lo = edges[-1]
            hi = lo + width
            coarse = self._cell(np.array([lo]), np.array([hi]), _GL8)[0]
            fine = self._cell(np.array([lo]), np.array([hi]), _GL16)[0]
            if abs(coarse - fine) > 1e-12 * max(1.0, abs(fine)):
                raise LaminarError(f"quadrature of 1/u diverges on [{lo:.6g}, {hi:.6g}]")
            edges.append(hi)
            cum.append(cum[-1] + fine)
            if len(edges) > 10 ** 6:
                raise LaminarError("w grows too slowly to reach the requested range")
        self.edges = np.array(edges)
        self.cum = np.array(cum)

    def _cell(self, lo, hi, rule):
        t, wt = rule
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = mid[:, None] + half[:, None] * t[None, :]
        return np.sum(half[:, None] * wt[None, :] / self.u(s), axis=1)

    @property
    def s_max(self) -> float:
        return float(self.edges[-1])

    def w(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < self.a1) or np.any(s > self.s_max):
            raise LaminarError(f"w evaluated outside [{self.a1:.6g}, {self.s_max:.6g}]")
        i = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        return self.cum[i] + self._cell(self.edges[i], s, _GL16)

    def v(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.cum[-1]):
            raise LaminarError("v evaluated outside the tabulated range of w")
        i = np.clip(np.searchsorted(self.cum, t, side="right") - 1, 0, len(self.edges) - 2)
        return solve_increasing(self.w, lambda s: 1.0 / self.u(s), t,
                                self.edges[i], self.edges[i + 1], rtol=1e-15)


@dataclass
class LaminarStructure:
    map_name: str
    a1: float
    u: Callable
    w: Callable
    v: Callable
    b: np.ndarray
    n_k: np.ndarray
    v_table: np.ndarray
    bisection_gap: float

    @property
    def k_max(self) -> int:
        return len(self.b) - 1

    def lambda_I(self) -> np.ndarray:
        """``lambda(I_{-k}) = b_k - b_{k-1}`` for ``k = 1..k_max``."""
        return np.diff(self.b)

    def lambda_E(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=int)
        return self.v_table[n] - self.v_table[n - 1]

    def length(self, k: int) -> float:
        """``L_{-k}``, with ``L_0 = a_1``."""
        return self.a1 if k == 0 else float(self.b[k] - self.b[k - 1])

    def ratios(self) -> np.ndarray:
        lam_i = self.lambda_I()
        lam_e = self.lambda_E(self.n_k[1:])
        r = lam_i / lam_e
        return np.maximum(r, 1.0 / r)

    def multiplicity(self) -> int:
        _, counts = np.unique(self.n_k[1:], return_counts=True)
        return int(counts.max())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,b_k,lambda_I,lambda_E,ratio\n")
        lam_i, lam_e = self.lambda_I(), self.lambda_E(self.n_k[1:])
        for k in range(1, self.k_max + 1):
            buf.write(f"{k},{self.b[k]:.17g},{lam_i[k - 1]:.17g},{lam_e[k - 1]:.17g},"
                      f"{lam_i[k - 1] / lam_e[k - 1]:.17g}\n")
        return buf.getvalue()


def _check_gap_shape(u: Callable, lo: float, hi: float, n: int = 2048) -> None:
    s = np.linspace(lo, hi, n)
    us = u(s)
    if np.any(us <= 0):
        raise LaminarError(f"u is not positive near s={s[np.argmax(us <= 0)]:.6g}")
    d1 = np.diff(us)
    if np.any(d1 > 0):
        raise LaminarError(f"u is not decreasing near s={s[np.argmax(d1 > 0)]:.6g}")
    d2 = np.diff(us, 2)
    floor = 8 * np.finfo(float).eps * np.abs(us[1:-1])
    if np.any(d2 < -floor):
        raise LaminarError(f"u is not convex near s={s[1 + np.argmax(d2 < -floor)]:.6g}")


def build_laminar(m: MapModel, k_max: int) -> LaminarStructure:
    """Tabulate ``b_0..b_{k_max}``, ``w``, ``v`` and the indices ``n_k``.

    Each ``b_k`` solves ``T_0(b_k) = b_{k-1}`` by a bracketed root search;
    the explicit inverse branch serves as a cross-check.
    """
    if m.kind != HALF_LINE:
        raise LaminarError("the laminar structure is built for half-line maps")
    if k_max < 1:
        raise LaminarError("k_max must be at least 1")
    u = gap_function(m)
    f0 = m.branches[0].forward
    psi0 = m.branches[0].inverse
    b = [m.a1]
    worst = 0.0
    for k in range(1, k_max + 1):
        prev = b[-1]
        step = float(u(np.array([prev]))[0])
        hi = prev + 2.0 * step
        tries = 0
        while float(f0(np.array([hi]))[0]) <= prev:
            hi = prev + 2.0 * (hi - prev)
            tries += 1
            if tries > 60:
                raise LaminarError(f"no bracket for b_{k} above {prev:.6g}")
        root = brentq(lambda s: float(f0(np.array([s]))[0]) - prev, prev, hi,
                      xtol=1e-300, rtol=ROOT_RTOL, maxiter=500)
        worst = max(worst, abs(root - float(psi0(np.array([prev]))[0])) / root)
        b.append(root)
    b = np.array(b)
    if not np.all(np.diff(b) > 0):
        raise LaminarError("b_k is not strictly increasing")
    _check_gap_shape(u, m.a1, b[-1])
    # w must cover n_{k_max}; a margin of a few steps keeps v well inside the table
    sc = _StepCounter(u, m.a1, need=float(_rough_w(u, m.a1, b[-1])) + 3.0)
    wb = sc.w(b)
    n_k = np.floor(wb).astype(int) + 1
    n_k[0] = 0
    top = int(n_k.max())
    v_table = np.concatenate([[m.a1], sc.v(np.arange(1, top + 1, dtype=float))])
    return LaminarStructure(m.name, m.a1, u, sc.w, sc.v, b, n_k, v_table, worst)


def _rough_w(u, a1, s):
    x = np.linspace(a1, s, 4097)
    return np.trapezoid(1.0 / u(x), x)


def check_v_ode(ls: LaminarStructure, t_max: Optional[float] = None, n: int = 200) -> float:
    """Largest ``|v'(t) - u(v(t))|`` with ``v'`` from central differences."""
    t_max = float(ls.n_k.max()) if t_max is None else t_max
    t = np.linspace(0.5, t_max - 0.5, n)
    h = 1e-4
    dv = (ls.v(t + h) - ls.v(t - h)) / (2 * h)
    return float(np.max(np.abs(dv - ls.u(ls.v(t)))))


def check_partition_comparability(ls: LaminarStructure) -> float:
    """``C1_hat``: the largest of ``lambda(I_{-k})/lambda(E_{n_k})`` and its reciprocal.

    Raises when the ratios keep growing: the maximum over the last fifth of
    ``k`` may exceed the maximum over the first four fifths by at most 10%.
    """
    if ls.k_max < 50:
        raise LaminarError("partition comparability needs k_max >= 50")
    r = ls.ratios()
    head = r[: 4 * len(r) // 5]
    tail = r[4 * len(r) // 5:]
    if tail.max() > 1.1 * head.max():
        raise LaminarError(f"comparability ratios grow with k: {tail.max():.4g} vs {head.max():.4g}")
    return float(r.max())


# ----------------------------------------------------------------- distortion

@dataclass
class DistortionReport:
    j_values: np.ndarray
    sup_log_ratio: dict
    c_prime_by_j: np.ndarray
    global_sup: float
    ratio_check: float
    refinement: List[tuple]
    pair_samples: int

    def flat_in_j(self, split: int = 50, tol: float = 0.2) -> bool:
        j = self.j_values
        lo = self.c_prime_by_j[j <= split].max()
        hi = self.c_prime_by_j[j >= split].max()
        return abs(hi - lo) <= tol * lo

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("j,p,sup_log_ratio\n")
        for (j, p), val in sorted(self.sup_log_ratio.items()):
            buf.write(f"{j},{p},{val:.17g}\n")
        return buf.getvalue()


def _kahan_prefix(terms: np.ndarray) -> np.ndarray:
    """Compensated prefix sums along axis 0, starting with the empty sum."""
    out = np.zeros((terms.shape[0] + 1,) + terms.shape[1:])
    s = np.zeros(terms.shape[1:])
    c = np.zeros(terms.shape[1:])
    for i, t in enumerate(terms):
        y = t - c
        tot = s + y
        c = (tot - s) - y
        s = tot
        out[i + 1] = s
    return out


def _pair_table(m: MapModel, ls: LaminarStructure, j: int, x: np.ndarray, y: np.ndarray):
    """``|log (T^p)'(x)/(T^p)'(y)|``, ``|T^p x - T^p y|`` and ``L_{p-j}``, ``p = 0..j``."""
    br = m.branches[0]
    xs = np.empty((j + 1, len(x)))
    ys = np.empty_like(xs)
    xs[0], ys[0] = x, y
    for p in range(j):
        if np.any(xs[p] < ls.a1) or np.any(ys[p] < ls.a1):
            raise LaminarError(f"orbit left the laminar interval before step {p} (j={j})")
        xs[p + 1] = br.forward(xs[p])
        ys[p + 1] = br.forward(ys[p])
    diff = np.log(br.dforward(xs[:-1])) - np.log(br.dforward(ys[:-1]))
    logr = np.abs(_kahan_prefix(diff))
    dist = np.abs(xs - ys)
    lengths = np.array([ls.length(j - p) for p in range(j + 1)])
    return logr, dist, lengths


def estimate_distortion(m: MapModel, ls: LaminarStructure, j_list: Sequence[int],
                        pair_samples: int = 1000, seed: int = 0,
                        slack: float = 1.01) -> DistortionReport:
    """Sample pairs in ``I_{-j}`` and follow them for ``p <= j`` laminar steps.

    ``C'_hat`` is the sup of ``|log ratio| L_{p-j} / |T^p x - T^p y|``; the
    displayed chain bound is then rechecked with ``C' = slack * C'_hat``.
    """
    j_list = [int(j) for j in j_list]
    if any(j < 1 or j > ls.k_max for j in j_list):
        raise LaminarError(f"every j must lie in [1, {ls.k_max}]")
    seqs = np.random.SeedSequence(seed).spawn(len(j_list))
    table = {}
    per_j = []
    normed_all = []
    for j, seq in zip(j_list, seqs):
        rng = np.random.default_rng(seq)
        lo, hi = ls.b[j - 1], ls.b[j]
        x = lo + (hi - lo) * rng.random(pair_samples)
        y = lo + (hi - lo) * rng.random(pair_samples)
        logr, dist, lengths = _pair_table(m, ls, j, x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            normed = np.where(dist > 0, logr * lengths[:, None] / dist, 0.0)
        for p in range(j + 1):
            table[(j, p)] = float(logr[p].max())
        per_j.append(float(normed.max()))
        normed_all.append((logr, dist, lengths, normed))
    c_by_j = np.array(per_j)
    c_hat = float(c_by_j.max())
    worst = -math.inf
    for logr, dist, lengths, _ in normed_all:
        bound = slack * c_hat * dist / lengths[:, None]
        worst = max(worst, float(np.max(logr - bound)))
    refinement = []
    size = max(1, pair_samples // 8)
    while True:
        sub = max(float(nm[:, :size].max()) for *_, nm in normed_all)
        refinement.append((size, sub))
        if size >= pair_samples:
            break
        size = min(pair_samples, 2 * size)
    return DistortionReport(np.array(j_list), table, c_by_j, c_hat, worst, refinement, pair_samples)
