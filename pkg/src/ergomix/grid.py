"""Nonuniformly gridded densities, monotone interpolation and cell quadrature."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .maps import HALF_LINE, UNIT_INTERVAL, InvariantDensity, MapModel

EPS = np.finfo(float).eps
DD_TOL = 1e-8
_GL = {m: leggauss(m) for m in (4, 8, 16)}


class GridError(ValueError):
    pass


def unit_nodes(n: int = 4096, x_min: float = 1e-30) -> np.ndarray:
    """0 followed by ``n - 1`` geometric nodes from ``x_min`` to 1."""
    return np.concatenate([[0.0], np.geomspace(x_min, 1.0, n - 1)])


def half_nodes(n: int = 4096, x_max: float = 60.0) -> np.ndarray:
    return np.linspace(0.0, x_max, n)


class MonotoneInterpolant:
    """Shape-preserving piecewise cubic (PCHIP) through ``(nodes, values)``.

    The cubic is taken in the natural coordinate, so linear data are
    reproduced exactly even on the geometric unit-interval grid. Queries
    outside the node range are clamped to the end values and counted.
    """

    def __init__(self, nodes: np.ndarray, values: np.ndarray, kind: str):
        self.nodes = nodes
        self.values = values
        self.kind = kind
        self.lo, self.hi = float(nodes[0]), float(nodes[-1])
        self._pchip = PchipInterpolator(nodes, values, extrapolate=False)

    def outside(self, x) -> int:
        x = np.asarray(x)
        return int(np.count_nonzero((x < self.lo) | (x > self.hi)))

    def __call__(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        return self._pchip(x)


def _cells(nodes: np.ndarray, breakpoints: Optional[np.ndarray]) -> np.ndarray:
    if breakpoints is None or len(breakpoints) == 0:
        return nodes
    bp = np.asarray(breakpoints, dtype=float)
    bp = bp[(bp > nodes[0]) & (bp < nodes[-1])]
    return np.union1d(nodes, bp)


def quadrature_points(nodes: np.ndarray, kind: str, density: Optional[InvariantDensity],
                      breakpoints=None, order: int = 8):
    """Points and weights for ``int f dmu`` over the node range.

    One Gauss-Legendre rule per cell; on the unit interval the weights carry
    ``h``, on the half-line they are plain Lebesgue weights.
    """
    edges = _cells(nodes, breakpoints)
    t, w = _GL[order]
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    if kind == UNIT_INTERVAL:
        wt = wt * density.h(x)
    return x, wt


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative function on a grid, integrated against ``mu`` (or Lebesgue).

    ``mass`` is the declared ``int g dmu``; ``None`` marks a bounded function
    of infinite mass (e.g. the constant 1).
    """

    nodes: np.ndarray
    values: np.ndarray
    kind: str
    density: Optional[InvariantDensity] = None
    mass: Optional[float] = None
    extrapolated: int = field(default=0, compare=False)
    roundoff: float = field(default=4 * EPS, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.shape != values.shape or nodes.ndim != 1 or len(nodes) < 4:
            raise GridError("nodes and values must be matching 1-d arrays (>= 4 points)")
        if not np.all(np.diff(nodes) > 0):
            raise GridError("nodes must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise GridError("values must be finite and nonnegative")
        if self.kind == UNIT_INTERVAL and self.density is None:
            raise GridError("unit-interval densities need the invariant density h")

    @cached_property
    def interpolant(self) -> MonotoneInterpolant:
        return MonotoneInterpolant(self.nodes, self.values, self.kind)

    def __call__(self, x) -> np.ndarray:
        return self.interpolant(x)

    def integrate(self, f: Optional[Callable] = None, breakpoints=None, order: int = 8):
        """``int f g dmu`` by per-cell Gauss-Legendre (``f = 1`` if omitted)."""
        x, w = quadrature_points(self.nodes, self.kind, self.density, breakpoints, order)
        gv = self(x)
        if f is None:
            return float(np.dot(w, gv))
        return np.dot(w, np.asarray(f(x)) * gv)

    def quadrature_mass(self) -> float:
        return self.integrate()

    def with_values(self, values, mass=None) -> "GridDensity":
        return replace(self, values=np.asarray(values, dtype=float), mass=mass, extrapolated=0)

    def normalized(self) -> "GridDensity":
        m = self.quadrature_mass()
        return replace(self, values=self.values / m, mass=1.0)

    # --- measured shape flags (divided differences with a round-off floor)

    def _noise(self, order: int) -> np.ndarray:
        # values carry relative error ``roundoff``; divided differences
        # amplify it by 1/dx (first order) or 1/dx^2 (second order)
        r = self.roundoff
        v = np.abs(self.values)
        dx = np.diff(self.nodes)
        if order == 1:
            return 2 * r * np.maximum(v[1:], v[:-1]) / dx
        scale = np.maximum(np.maximum(v[2:], v[1:-1]), v[:-2])
        return 4 * r * scale / (dx[1:] * dx[:-1])

    def first_differences(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    def second_differences(self) -> np.ndarray:
        x, v = self.nodes, self.values
        d1 = np.diff(v) / np.diff(x)
        return 2.0 * np.diff(d1) / (x[2:] - x[:-2])

    def is_monotone_increasing(self, tol: float = DD_TOL) -> bool:
        return bool(np.all(self.first_differences() >= -(tol + self._noise(1))))

    def is_monotone_decreasing(self, tol: float = DD_TOL) -> bool:
        return bool(np.all(self.first_differences() <= tol + self._noise(1)))

    def is_concave(self, tol: float = DD_TOL) -> bool:
        return bool(np.all(self.second_differences() <= tol + self._noise(2)))

    def flags(self, tol: float = DD_TOL) -> dict:
        return {
            "is_monotone_increasing": self.is_monotone_increasing(tol),
            "is_monotone_decreasing": self.is_monotone_decreasing(tol),
            "is_concave": self.is_concave(tol),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for x, v in zip(self.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kind: str, density: Optional[InvariantDensity] = None,
                 mass: Optional[float] = None) -> "GridDensity":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "value"]:
            raise GridError("expected header 'x,value'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0], data[:, 1], kind, density, mass)


def grid_from_function(m: MapModel, fn: Callable, nodes: Optional[np.ndarray] = None,
                       normalize: bool = True) -> GridDensity:
    """Tabulate ``fn`` on the default grid of ``m`` (optionally to mass 1)."""
    if nodes is None:
        nodes = unit_nodes() if m.kind == UNIT_INTERVAL else half_nodes()
    values = np.asarray(fn(nodes), dtype=float)
    g = GridDensity(nodes, values, m.kind, m.density)
    if normalize:
        return g.normalized()
    return replace(g, mass=g.quadrature_mass())


def seed_density(m: MapModel, which: Optional[str] = None, nodes=None) -> GridDensity:
    """Canonical persistently monotonic seeds, normalised to mass 1.

    unit interval: ``linear`` g(x) = x, ``quadratic`` g(x) = x^2;
    half-line: ``exp`` e^{-s}, ``exp2`` e^{-2s}. Without ``which`` the
    first of each pair is used.
    """
    which = which or default_seed(m)
    table = {
        UNIT_INTERVAL: {"linear": lambda x: x, "quadratic": lambda x: x * x},
        HALF_LINE: {"exp": lambda s: np.exp(-s), "exp2": lambda s: np.exp(-2.0 * s)},
    }
    try:
        fn = table[m.kind][which]
    except KeyError:
        raise GridError(f"no seed {which!r} for {m.kind} maps; "
                        f"choose from {sorted(table[m.kind])}") from None
    return grid_from_function(m, fn, nodes)


def default_seed(m: MapModel) -> str:
    return "linear" if m.kind == UNIT_INTERVAL else "exp"
