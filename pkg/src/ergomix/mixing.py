"""Mixing experiments: global-local correlations, zero type, the failure of
global-global mixing, the plateau/slicing bound and a Monte Carlo check of
the duality ``<F o T^n, g> = <F, P^n g>``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .conjugation import build_conjugation
from .grid import GridDensity, MonotoneInterpolant, half_nodes, quadrature_points, unit_nodes
from .limits import InverseCDFSampler, _farey_step, _to_rational, is_farey
from .maps import HALF_LINE, UNIT_INTERVAL, MapModel
from .observables import (AvEstimate, GlobalObservable, _integrate_s, coupling, default_schedule,
                          estimate_av, indicator, product, volume_measure)
from .parallel import run_chunks
from .transfer import TransferError, TransferOperator, truncate_plateau

CONVERGING, STALLED, DIVERGING = "converging", "stalled", "diverging"


class MixingError(ValueError):
    pass


# ------------------------------------------------------- correlation series

def trend_verdict(residuals: np.ndarray) -> tuple:
    """``(verdict, slope)`` from the least-squares slope of ``log residual``.

    The fit uses the last half of ``n >= 1``. Converging means a negative
    slope and a final residual below a quarter of the one at ``n = 1``.
    """
    r = np.maximum(np.abs(np.asarray(residuals[1:], dtype=float)), 1e-300)
    if len(r) < 2:
        return STALLED, 0.0
    half = r[len(r) // 2:]
    n = np.arange(len(half), dtype=float)
    slope = float(np.polyfit(n, np.log(half), 1)[0]) if len(half) > 1 else 0.0
    if slope < 0 and r[-1] < r[0] / 4:
        return CONVERGING, slope
    if slope > 0 and r[-1] > r[0]:
        return DIVERGING, slope
    return STALLED, slope


@dataclass
class CorrelationSeries:
    n_values: np.ndarray
    c_n: np.ndarray
    target: complex
    residuals: np.ndarray
    verdict: str
    slope: float
    sup_bound: float
    mass: float
    label: str = ""

    def holder_ok(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(self.c_n) <= self.sup_bound * self.mass + tol))

    def residual_at(self, n: int) -> float:
        return float(self.residuals[int(np.flatnonzero(self.n_values == n)[0])])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,c_n,target,residual\n")
        t = complex(self.target).real
        for n, c, r in zip(self.n_values, self.c_n, self.residuals):
            buf.write(f"{int(n)},{complex(c).real:.17g},{t:.17g},{r:.17g}\n")
        return buf.getvalue()


def _series(m: MapModel, F: GlobalObservable, g: GridDensity, n_max: int, target: complex,
            label: str) -> CorrelationSeries:
    op = TransferOperator(m, g.nodes)
    cur = g
    cs = [coupling(m, F, cur)]
    for _ in range(n_max):
        cur = op(cur)
        cs.append(coupling(m, F, cur))
    c = np.asarray(cs)
    res = np.abs(c - target)
    verdict, slope = trend_verdict(res)
    mass = g.mass if g.mass is not None else g.quadrature_mass()
    return CorrelationSeries(np.arange(n_max + 1), c, target, res, verdict, slope,
                             F.sup_bound, mass, label)


def run_glm2(m: MapModel, F: GlobalObservable, g: GridDensity, n_max: int,
             av: Optional[complex] = None) -> CorrelationSeries:
    """``c_n = <F, P^n g>`` against ``Av(F) mu(g)``, for ``n = 0..n_max``."""
    if g.mass is None:
        raise MixingError("g needs a finite declared mass")
    if av is None:
        av = F.known_av
    if av is None:
        est = estimate_av(m, F)
        if not est.converged:
            raise MixingError(f"Av({F.name}) unavailable and the estimate did not converge "
                              f"(Cauchy width {est.cauchy_width:.3g})")
        av = est.extrapolated
    return _series(m, F, g, n_max, av * g.mass, f"glm2:{F.name}")


def run_glm1(m: MapModel, F: GlobalObservable, g1: GridDensity, g2: GridDensity,
             n_max: int) -> CorrelationSeries:
    """Zero-mass reading: ``<F, P^n (g1 - g2)>`` with target 0."""
    s1 = _series(m, F, g1, n_max, 0.0, "")
    s2 = _series(m, F, g2, n_max, 0.0, "")
    c = s1.c_n - s2.c_n
    res = np.abs(c)
    verdict, slope = trend_verdict(res)
    return CorrelationSeries(s1.n_values, c, 0.0, res, verdict, slope, F.sup_bound,
                             s1.mass + s2.mass, f"glm1:{F.name}")


def llm_set(m: MapModel, delta: float) -> GlobalObservable:
    """``1_{[delta, 1)}`` on the unit interval, ``1_{(0, delta]}`` on the half-line."""
    if m.kind == UNIT_INTERVAL:
        if not 0 < delta < 1:
            raise MixingError(f"delta={delta!r} must lie in (0, 1)")
        return indicator(delta, 1.0 + 1e-300)
    if not delta > 0:
        raise MixingError(f"delta={delta!r} must be positive")
    return indicator(0.0, delta)


def run_llm(m: MapModel, delta: float, g: GridDensity, n_max: int) -> CorrelationSeries:
    """``<1_A, P^n g>`` for a set ``A`` of finite measure; the target is 0."""
    A = llm_set(m, delta)
    if m.kind == UNIT_INTERVAL:
        A = GlobalObservable(lambda x: (x >= delta).astype(float), 1.0, 0.0,
                             f"1[{delta:g},1)", False, breakpoints=(delta,))
    return _series(m, A, g, n_max, 0.0, f"llm:{A.name}")


# ---------------------------------------------------------- GGM failure

def _grid_integral(m: MapModel, nodes: np.ndarray, values: np.ndarray, F: Callable,
                   breakpoints) -> complex:
    interp = MonotoneInterpolant(nodes, values, m.kind)
    x, w = quadrature_points(nodes, m.kind, m.density, breakpoints, 8)
    return np.dot(w, F(x) * interp(x))


@dataclass
class GGMRow:
    n: int
    estimate: AvEstimate
    av_f2: float
    av_f_squared: float

    @property
    def value(self) -> float:
        return float(np.real(self.estimate.extrapolated))


class _Correlator:
    """``int_V (F o T^n) F dmu`` for volumes ``V`` of measure ``L``.

    Points that stay ``n`` steps in the laminar interval move by the smooth
    branch ``T_0^n`` and are integrated directly in the measure coordinate.
    The rest of the volume has finite measure ``s_n`` and is handled by
    duality, ``<F, P^n (F 1_R)>``, on a grid.
    """

    def __init__(self, m: MapModel, F: GlobalObservable, n: int, grid_size: int = 4096):
        self.m, self.F, self.n = m, F, n
        if m.kind == UNIT_INTERVAL:
            self.conj = build_conjugation(m.density)
            to_x = self.conj.phi_inverse
            self.to_s = self.conj.phi
            base = unit_nodes(grid_size)
        else:
            self.conj = None
            to_x = lambda s: np.asarray(s, dtype=float)  # noqa: E731
            self.to_s = to_x
            base = half_nodes(grid_size, 60.0)
        self.to_x = to_x
        psi0 = m.branches[0].inverse
        c = np.array([m.a1])
        for _ in range(n):
            c = psi0(c)
        self.c_n = float(c[0])
        self.s_n = float(self.to_s(c)[0])
        self.base = base
        self._cache = {}

    def _laminar_image(self, x):
        b0 = self.m.branches[0].forward
        for _ in range(self.n):
            x = b0(x)
        return x

    def _dual(self, cut: float) -> complex:
        """``<F, P^n (F 1_R)>`` with ``R = [cut, 1)`` or ``(0, cut]``."""
        if cut in self._cache:
            return self._cache[cut]
        nodes = np.union1d(self.base, [cut])
        if self.m.kind == UNIT_INTERVAL:
            inside = nodes >= cut
        else:
            inside = nodes <= cut
        safe = np.where(nodes > 0, nodes, nodes[1]) if self.m.kind == UNIT_INTERVAL else nodes
        vals = np.where(inside, self.F(safe), 0.0)
        op = TransferOperator(self.m, nodes)
        for _ in range(self.n):
            vals = op.apply_array(vals)
        out = _grid_integral(self.m, nodes, vals, self.F, np.array([cut]))
        self._cache[cut] = out
        return out

    def integral(self, L: float) -> complex:
        if self.n == 0:
            G = product(self.F, self.F)
            from .observables import volume_integral
            return volume_integral(self.m, G, L)
        if L <= self.s_n:
            return self._dual(float(self.to_x(np.array([L]))[0]))
        head = self._dual(self.c_n)

        def fs(s):
            x = self.to_x(s)
            return self.F(self._laminar_image(x)) * self.F(x)

        tail = _integrate_s(lambda s: fs(s + self.s_n), L - self.s_n, np.array([]))
        return head + tail


def run_ggm_counterexample(m: MapModel, F: GlobalObservable, n_list: Sequence[int], *,
                           depth: float = 200.0, steps: int = 64, tol: float = 0.02,
                           av_f2: Optional[float] = None) -> List[GGMRow]:
    """Finite-volume estimates of ``Av((F o T^n) F)`` for each ``n``.

    Global-global mixing would force the limit ``Av(F)^2``; for a
    ``d_mu``-uniformly continuous ``F`` it stays at ``Av(F^2)`` instead.
    """
    if F.known_av is None:
        raise MixingError("F needs a known infinite-volume average")
    if av_f2 is None:
        est2 = estimate_av(m, product(F, F), depth=depth, steps=steps, tol=tol)
        av_f2 = float(np.real(est2.extrapolated))
    schedule = default_schedule(m, depth, steps)
    vols = np.array([volume_measure(m, a) for a in schedule])
    rows = []
    for n in n_list:
        corr = _Correlator(m, F, int(n))
        vals = np.array([corr.integral(L) / L for L in vols])
        tail = vals[-max(2, len(vals) // 4):]
        width = float(np.max(np.abs(tail[:, None] - tail[None, :])))
        est = AvEstimate(schedule, vols, vals, vals[-1], width, width <= tol, tol)
        if not est.converged:
            raise MixingError(f"Av schedule did not converge for n={n} (width {width:.3g})")
        rows.append(GGMRow(int(n), est, av_f2, float(abs(F.known_av) ** 2)))
    return rows


# ------------------------------------------------------ slicing bound

@dataclass
class SlicingBoundReport:
    delta: float
    n: int
    I1_bound: float
    I1_value: float
    I1_slices: float
    I2_value: float
    total_bound: float
    actual: float
    sup_slice_average: float
    gamma_mass: float

    @property
    def holds(self) -> bool:
        return self.actual <= self.total_bound + 1e-8


def _cumulative_tail_integrals(m: MapModel, F: GlobalObservable, cuts: np.ndarray) -> np.ndarray:
    """``int_{[c, 1)} F dmu`` for every cut (increasing), in the measure coordinate."""
    conj = build_conjugation(m.density)
    s = conj.phi(cuts)
    order = np.argsort(s)
    s_sorted = s[order]
    edges = np.union1d(s_sorted, np.arange(0.0, s_sorted[-1] + 0.25, 0.25))
    edges = edges[edges <= s_sorted[-1]]
    t, w = np.polynomial.legendre.leggauss(16)
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * t[None, :]
    vals = F(conj.phi_inverse(pts.ravel())).reshape(pts.shape)
    cell = np.sum(half[:, None] * w[None, :] * vals, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    at = cum[np.searchsorted(edges, s_sorted)]
    out = np.empty_like(at)
    out[order] = at
    return out


def slicing_decomposition(m: MapModel, F: GlobalObservable, g: GridDensity, delta: float,
                          n: int, *, strict: bool = True) -> SlicingBoundReport:
    """Split ``<F, P^n g>`` at the plateau ``gamma_n = min(P^n g(delta), P^n g)``.

    ``I_2 = int_delta^1 (P^n g - gamma_n) dmu``. ``I_1 = int F gamma_n dmu`` is
    bounded by ``sup_r |mu_{[gamma^{-1}(r), 1)}(F)| * mu(gamma_n)``, the sup
    running over the horizontal slices ``r`` in ``(0, gamma_n(delta))``. The
    slice integral itself is also evaluated as a check on ``I_1``. With
    ``strict`` a violated bound raises instead of being reported.
    """
    if m.kind != UNIT_INTERVAL:
        raise MixingError("the plateau construction is set on the unit interval")
    if F.known_av is not None and abs(F.known_av) > 1e-12:
        raise MixingError("slicing assumes Av(F) = 0")
    op = TransferOperator(m, g.nodes)
    pg = g
    for _ in range(n):
        pg = op(pg)
    if not pg.is_monotone_increasing():
        raise MixingError(f"P^{n} g is not increasing; the plateau argument does not apply")
    try:
        gamma = truncate_plateau(pg, delta)
    except TransferError as exc:
        raise MixingError(str(exc)) from exc
    actual = abs(coupling(m, F, pg))
    plateau = gamma.nodes >= delta
    diff_vals = np.where(plateau, pg(gamma.nodes) - gamma.values, 0.0)
    i2 = float(_grid_integral(m, gamma.nodes, diff_vals, lambda x: np.ones_like(x), np.array([delta])))
    i2 = max(i2, 0.0)
    i1 = float(np.real(coupling(m, F, gamma)))
    gmass = gamma.quadrature_mass()

    # slices: {gamma > r} = [x_r, 1) with x_r running over the nodes below delta
    below = (gamma.nodes > 0) & (gamma.nodes <= delta)
    cuts = gamma.nodes[below]
    levels = gamma.values[below]
    tails = _cumulative_tail_integrals(m, F, cuts)
    conj = build_conjugation(m.density)
    vol = conj.phi(cuts)
    with np.errstate(divide="ignore", invalid="ignore"):
        avgs = np.where(vol > 0, tails / vol, 0.0)
    sup_avg = float(np.max(np.abs(avgs))) if len(avgs) else 0.0
    dr = np.diff(np.concatenate([[0.0], levels]))
    slices = float(np.sum(dr * tails))
    i1_bound = sup_avg * gmass
    total = i1_bound + F.sup_bound * i2
    rep = SlicingBoundReport(delta, n, i1_bound, i1, slices, i2, total, float(actual), sup_avg, gmass)
    if strict and not rep.holds:
        raise MixingError(f"slicing bound violated: |<F, P^n g>| = {rep.actual:.6g} > {rep.total_bound:.6g}")
    return rep


# ---------------------------------------------------- Monte Carlo duality

def _duality_chunk_farey(size, seq, sampler, n_max, f_of_log, bits):
    rng = np.random.default_rng(seq)
    xs = sampler(rng, size)
    vals = np.full((size, n_max + 1), np.nan)
    for i, x in enumerate(xs):
        if not 0.0 < x < 1.0:
            continue
        p, q = _to_rational(float(x), rng, bits)
        for k in range(n_max + 1):
            if p == 0 or p == q:
                break
            vals[i, k] = f_of_log(math.log(q) - math.log(p))
            p, q = _farey_step(p, q)
    return vals


def _duality_chunk_float(size, seq, m, F, sampler, n_max):
    rng = np.random.default_rng(seq)
    x = sampler(rng, size)
    vals = np.empty((size, n_max + 1))
    for k in range(n_max + 1):
        vals[:, k] = np.real(F(x))
        x = m(x)
    return vals


@dataclass
class DualityRow:
    n: int
    transfer: float
    monte_carlo: float
    std_error: float

    @property
    def z(self) -> float:
        return abs(self.transfer - self.monte_carlo) / self.std_error if self.std_error > 0 else 0.0


def monte_carlo_duality(m: MapModel, F: GlobalObservable, g: GridDensity, n_max: int, N: int,
                        seed: int, *, f_of_log: Optional[Callable] = None, bits: int = 512,
                        workers: Optional[int] = None) -> List[DualityRow]:
    """``<F, P^n g>`` next to the orbit average of ``F o T^n`` over ``x ~ mu_g``.

    Farey orbits are exact rationals (``f_of_log`` gives ``F`` as a function
    of ``ln(1/x)``); other maps are iterated in double precision.
    """
    if g.mass is None:
        raise MixingError("g needs a finite declared mass")
    sampler = InverseCDFSampler(g)
    if is_farey(m):
        if f_of_log is None:
            raise MixingError("Farey orbits need F as a function of ln(1/x)")
        parts = run_chunks(_duality_chunk_farey, N, seed, workers=workers,
                           args=(sampler, n_max, f_of_log, bits))
    else:
        parts = run_chunks(_duality_chunk_float, N, seed, workers=workers,
                           args=(m, F, sampler, n_max))
    vals = np.concatenate(parts, axis=0)
    series = _series(m, F, g, n_max, 0.0, "")
    rows = []
    for k in range(n_max + 1):
        col = vals[:, k]
        col = col[np.isfinite(col)]
        mc = float(np.mean(col)) * g.mass
        se = float(np.std(col, ddof=1) / math.sqrt(len(col))) * g.mass
        rows.append(DualityRow(k, float(np.real(series.c_n[k])), mc, se))
    return rows
