"""Global observables, finite-volume averages and the coupling with densities.

On the unit interval every volume ``[a, 1)`` is handled in the coordinate
``s = Phi(x)``, where ``mu`` becomes Lebesgue measure and ``[a, 1)`` becomes
``(0, Phi(a)]``. The integrands are then bounded and a plain per-cell Gauss
rule suffices even at depth ``a = e^{-200}``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .conjugation import Conjugation, build_conjugation
from .grid import GridDensity
from .maps import HALF_LINE, UNIT_INTERVAL, MapModel

_GL8 = leggauss(8)
_GL16 = leggauss(16)
AV_TOL = 0.02


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class GlobalObservable:
    """A bounded function on the open domain.

    ``breakpoints`` lists known discontinuities (quadrature splits there).
    ``volume_integral(L)``, when given, returns ``int F`` over the volume of
    measure ``L`` exactly; it replaces quadrature for observables whose
    discontinuities accumulate at the indifferent end. ``max_depth`` caps
    the volume measure at which the observable is still resolved.
    """

    eval: Callable
    sup_bound: float
    known_av: Optional[complex] = None
    name: str = "F"
    d_mu_uniformly_continuous: Optional[bool] = None
    breakpoints: tuple = ()
    volume_integral: Optional[Callable] = None
    max_depth: float = math.inf
    support: Optional[tuple] = None

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))

    def check_bound(self, x) -> bool:
        return bool(np.all(np.abs(self(x)) <= self.sup_bound * (1 + 1e-12)))


# ------------------------------------------------------- built-in observables

def _conj(m: MapModel) -> Optional[Conjugation]:
    if m.kind == HALF_LINE:
        return None
    return build_conjugation(m.density)


def sin_phi(m: MapModel) -> GlobalObservable:
    """``sin o Phi`` (plain ``sin`` on the half-line); infinite-volume average 0."""
    if m.kind == HALF_LINE:
        return GlobalObservable(np.sin, 1.0, 0.0, "sin", True)
    phi = _conj(m).phi
    return GlobalObservable(lambda x: np.sin(phi(x)), 1.0, 0.0, "sin_phi", True)


def sin2_phi(m: MapModel) -> GlobalObservable:
    """``sin^2 o Phi``; infinite-volume average 1/2."""
    if m.kind == HALF_LINE:
        return GlobalObservable(lambda s: np.sin(s) ** 2, 1.0, 0.5, "sin2", True)
    phi = _conj(m).phi
    return GlobalObservable(lambda x: np.sin(phi(x)) ** 2, 1.0, 0.5, "sin2_phi", True)


def constant(c: float) -> GlobalObservable:
    return GlobalObservable(lambda x: np.full(np.shape(x), c, dtype=float), abs(c), c,
                            f"const({c:g})", True)


def indicator(lo: float, hi: float) -> GlobalObservable:
    """``1_{[lo, hi)}``. A set of finite measure has zero infinite-volume average."""
    return GlobalObservable(lambda x: ((x >= lo) & (x < hi)).astype(float), 1.0, 0.0,
                            f"1[{lo:g},{hi:g})", False, breakpoints=(lo, hi), support=(lo, hi))


def linear_combination(terms: Sequence[tuple]) -> GlobalObservable:
    """``sum_i c_i F_i`` for ``terms = [(c_i, F_i), ...]``."""
    av = None
    if all(F.known_av is not None for _, F in terms):
        av = sum(c * F.known_av for c, F in terms)
    bps = tuple(sorted({b for _, F in terms for b in F.breakpoints}))
    depth = min(F.max_depth for _, F in terms)
    vol = None
    if all(F.volume_integral is not None for _, F in terms):
        def vol(L, m):
            return sum(c * F.volume_integral(L, m) for c, F in terms)
    return GlobalObservable(
        lambda x: sum(c * F(x) for c, F in terms),
        sum(abs(c) * F.sup_bound for c, F in terms),
        av, "+".join(f"{c:g}*{F.name}" for c, F in terms),
        breakpoints=bps, volume_integral=vol, max_depth=depth)


def product(F: GlobalObservable, G: GlobalObservable, name: Optional[str] = None) -> GlobalObservable:
    return GlobalObservable(lambda x: F(x) * G(x), F.sup_bound * G.sup_bound, None,
                            name or f"{F.name}*{G.name}",
                            breakpoints=tuple(sorted(set(F.breakpoints) | set(G.breakpoints))),
                            max_depth=min(F.max_depth, G.max_depth))


# -------------------------------------------------------- volume averages

def volume_measure(m: MapModel, a: float) -> float:
    """``mu([a, 1))`` on the unit interval; ``a`` itself on the half-line."""
    if m.kind == HALF_LINE:
        return float(a)
    return float(_conj(m).phi(np.array([a]))[0])


def _integrate_s(fs: Callable, L: float, cuts: np.ndarray, width: float = 0.25) -> complex:
    """``int_0^L fs(s) ds`` with cells no wider than ``width`` and split at ``cuts``.

    Every cell is done with 8 and 16 Gauss points and the pair must agree.
    """
    n = max(1, int(math.ceil(L / width)))
    edges = np.linspace(0.0, L, n + 1)
    if len(cuts):
        edges = np.union1d(edges, cuts[(cuts > 0) & (cuts < L)])
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    out = []
    for t, w in (_GL8, _GL16):
        s = mid[:, None] + half[:, None] * t[None, :]
        vals = np.asarray(fs(s.ravel())).reshape(s.shape)
        out.append(np.sum(half[:, None] * w[None, :] * vals))
    coarse, fine = out
    if abs(coarse - fine) > 1e-8 * max(1.0, abs(fine)):
        raise ObservableError(f"quadrature did not converge on (0, {L:g}] "
                              f"(8 vs 16 points differ by {abs(coarse - fine):.3g})")
    return fine


def volume_integral(m: MapModel, F: GlobalObservable, L: float) -> complex:
    """``int F dmu`` over the volume of measure ``L``: ``[Phi^{-1}(L), 1)`` or ``(0, L]``."""
    if F.volume_integral is not None:
        return F.volume_integral(L, m)
    if m.kind == HALF_LINE:
        return _integrate_s(F, L, np.asarray(F.breakpoints, dtype=float))
    c = _conj(m)
    cuts = c.phi(np.asarray([b for b in F.breakpoints if 0 < b < 1], dtype=float)) \
        if F.breakpoints else np.array([])
    return _integrate_s(lambda s: F(c.phi_inverse(s)), L, np.asarray(cuts, dtype=float))


def finite_volume_average(m: MapModel, F: GlobalObservable, a: float) -> complex:
    """``mu_V(F)`` for ``V = [a, 1)`` (unit interval) or ``V = (0, a]`` (half-line)."""
    if m.kind == UNIT_INTERVAL and not (0.0 < a < 1.0):
        raise ObservableError(f"cut a={a!r} must lie in (0, 1)")
    if m.kind == HALF_LINE and not a > 0:
        raise ObservableError(f"cut a={a!r} must be positive")
    L = volume_measure(m, a)
    return volume_integral(m, F, L) / L


@dataclass
class AvEstimate:
    schedule: np.ndarray
    volumes: np.ndarray
    values: np.ndarray
    extrapolated: complex
    cauchy_width: float
    converged: bool
    tolerance: float = AV_TOL

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("a,mu_V_F\n")
        for a, v in zip(self.schedule, self.values):
            v = complex(v)
            val = f"{v.real:.17g}" if v.imag == 0 else f"{v.real:.17g}{v.imag:+.17g}j"
            buf.write(f"{a:.17g},{val}\n")
        return buf.getvalue()


def default_schedule(m: MapModel, depth: float = 200.0, steps: int = 64) -> np.ndarray:
    """Cuts whose volumes grow linearly to ``depth``.

    On the unit interval ``a_k = Phi^{-1}(depth k / steps)``, which for
    ``h = 1/x`` is the geometric sequence ``e^{-depth k / steps}``; on the
    half-line ``a_k = depth k / steps``.
    """
    L = depth * np.arange(1, steps + 1) / steps
    if m.kind == HALF_LINE:
        return L
    return _conj(m).phi_inverse(L)


def estimate_av(m: MapModel, F: GlobalObservable, schedule: Optional[np.ndarray] = None, *,
                depth: float = 200.0, steps: int = 64, tol: float = AV_TOL) -> AvEstimate:
    """Finite-volume averages along ``schedule`` with a Cauchy-width verdict.

    No extrapolation is attempted: the reported value is the last average,
    and ``cauchy_width`` is the spread over the last quarter of the schedule.
    If ``F`` is resolved only up to ``max_depth``, the default schedule is
    cut there.
    """
    if schedule is None:
        schedule = default_schedule(m, min(depth, F.max_depth), steps)
    schedule = np.asarray(schedule, dtype=float)
    if len(schedule) < 8:
        raise ObservableError("schedule needs at least 8 steps")
    vols = np.array([volume_measure(m, a) for a in schedule])
    vals = np.array([volume_integral(m, F, L) / L for L in vols])
    tail = vals[-max(2, len(vals) // 4):]
    width = float(np.max(np.abs(tail[:, None] - tail[None, :])))
    return AvEstimate(schedule, vols, vals, vals[-1], width, width <= tol, tol)


# ----------------------------------------------------------- coupling, d_mu

def coupling(m: MapModel, F: GlobalObservable, g: GridDensity) -> complex:
    """``<F, g> = int F g dmu`` (Lebesgue on the half-line) on the grid of ``g``."""
    if g.mass is None:
        raise ObservableError("coupling needs a density of finite mass")
    if F.support is not None:
        lo, hi = F.support
        if hi <= g.nodes[0] or lo >= g.nodes[-1]:
            raise ObservableError(f"observable support [{lo:g}, {hi:g}) misses the grid")
    bps = np.asarray(F.breakpoints, dtype=float)
    val = g.integrate(F, breakpoints=bps if len(bps) else None)
    return val if np.iscomplexobj(val) else float(val)


def mu_distance(m: MapModel, x, y):
    """``d_mu(x, y) = mu([x, y])``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.kind == HALF_LINE:
        return np.abs(x - y)
    phi = _conj(m).phi
    return np.abs(phi(x) - phi(y))
