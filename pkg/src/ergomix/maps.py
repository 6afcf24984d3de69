"""Intermittent Markov maps: the unit interval with an indifferent fixed
point at 0 and the half-line with an indifferent fixed point at +inf.

A :class:`MapModel` is a bundle of per-branch closed forms. Every branch
carries its forward map, its exact inverse branch and two derivatives of
each, so transfer operators can be evaluated pointwise without any
root-finding except where a family has no closed-form forward branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Fn = Callable[[np.ndarray], np.ndarray]

UNIT_INTERVAL = "unit_interval"
HALF_LINE = "half_line"

BUILTIN_FAMILIES = ("farey", "t_alpha", "pm_quadratic", "pm_halfline")

GOLDEN_CUT = (math.sqrt(5.0) - 1.0) / 2.0
LN2 = math.log(2.0)


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class Branch:
    """One full branch ``b_j`` and its inverse ``psi_j``."""

    forward: Fn
    dforward: Fn
    d2forward: Fn
    inverse: Fn
    dinverse: Fn
    d2inverse: Fn


@dataclass(frozen=True)
class InvariantDensity:
    """Density ``h = dmu/dlambda`` of the infinite invariant measure.

    ``antiderivative`` is ``Phi(x) = int_x^1 h``; ``antiderivative_inverse``
    its inverse on (0, inf). Both are optional.
    """

    h: Fn
    dh: Optional[Fn] = None
    antiderivative: Optional[Fn] = None
    antiderivative_inverse: Optional[Fn] = None
    singular_end: float = 0.0


@dataclass(frozen=True)
class MapModel:
    name: str
    kind: str
    partition_points: tuple
    branches: tuple
    density: Optional[InvariantDensity] = None
    params: dict = field(default_factory=dict)
    gap: Optional[Fn] = None  # closed form of u(x) = x - b_0(x), half-line only

    def __post_init__(self):
        if self.kind not in (UNIT_INTERVAL, HALF_LINE):
            raise MapError(f"unknown map kind {self.kind!r}")
        pts = np.asarray(self.partition_points, dtype=float)
        if len(pts) != len(self.branches) + 1:
            raise MapError("need one more partition point than branches")
        steps = np.diff(pts[np.isfinite(pts)])
        if self.kind == UNIT_INTERVAL and not np.all(steps > 0):
            raise MapError("unit-interval partition points must increase")
        if self.kind == HALF_LINE and not np.all(steps < 0):
            raise MapError("half-line partition points must decrease")
        if self.kind == UNIT_INTERVAL and self.density is None:
            raise MapError("unit-interval models need an invariant density")

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def a1(self) -> float:
        """Boundary of the laminar interval I_0."""
        return float(self.partition_points[1])

    @property
    def lebesgue(self) -> bool:
        return self.kind == HALF_LINE

    def branch_domain(self, j: int) -> tuple:
        """Closure of I_j as an increasing (lo, hi) pair."""
        a = self.partition_points
        if self.kind == UNIT_INTERVAL:
            return float(a[j]), float(a[j + 1])
        return float(a[j + 1]), float(a[j])

    def branch_index(self, x) -> np.ndarray:
        """Index of the branch containing ``x``; partition points go left."""
        x = np.asarray(x, dtype=float)
        pts = np.asarray(self.partition_points, dtype=float)
        if self.kind == UNIT_INTERVAL:
            idx = np.searchsorted(pts, x, side="left") - 1
            return np.clip(idx, 0, self.branch_count - 1)
        # half-line: breakpoints increasing from 0 up to a_1
        inner = pts[1:-1][::-1]
        i = np.searchsorted(inner, x, side="left")
        return np.clip(self.branch_count - 1 - i, 0, self.branch_count - 1)

    def _by_branch(self, attr: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        idx = self.branch_index(x)
        for j, br in enumerate(self.branches):
            m = idx == j
            if np.any(m):
                out[m] = getattr(br, attr)(x[m])
        return out

    def __call__(self, x) -> np.ndarray:
        return self._by_branch("forward", x)

    def deriv(self, x) -> np.ndarray:
        return self._by_branch("dforward", x)

    def deriv2(self, x) -> np.ndarray:
        return self._by_branch("d2forward", x)

    def iterate(self, x, n: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        for _ in range(n):
            x = self(x)
        return x

    def inverse(self, j: int, y) -> np.ndarray:
        return self.branches[j].inverse(np.asarray(y, dtype=float))

    def dinverse(self, j: int, y) -> np.ndarray:
        return self.branches[j].dinverse(np.asarray(y, dtype=float))

    def d2inverse(self, j: int, y) -> np.ndarray:
        return self.branches[j].d2inverse(np.asarray(y, dtype=float))

    def codomain(self) -> tuple:
        return (0.0, 1.0) if self.kind == UNIT_INTERVAL else (0.0, math.inf)


def solve_increasing(f: Fn, df: Fn, target, lo, hi, x0=None, rtol: float = 4e-16,
                     maxiter: int = 200) -> np.ndarray:
    """Vectorised safeguarded Newton for an increasing ``f`` on ``[lo, hi]``.

    Newton steps that leave the current bracket are replaced by bisection.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)
    active = np.ones(target.shape, dtype=bool)
    for _ in range(maxiter):
        if not active.any():
            break
        xa = x[active]
        r = f(xa) - target[active]
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(r < 0, xa, lo_a)
        hi_a = np.where(r > 0, xa, hi_a)
        d = df(xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - r / d
        bad = ~np.isfinite(xn) | (xn < lo_a) | (xn > hi_a)
        xn = np.where(bad, 0.5 * (lo_a + hi_a), xn)
        step = np.abs(xn - xa)
        done = (r == 0) | (step <= rtol * np.maximum(np.abs(xn), 1e-300))
        x[active] = np.where(r == 0, xa, xn)
        lo[active], hi[active] = lo_a, hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x


# ---------------------------------------------------------------- families

def _farey() -> MapModel:
    b0 = Branch(
        forward=lambda x: x / (1.0 - x),
        dforward=lambda x: 1.0 / (1.0 - x) ** 2,
        d2forward=lambda x: 2.0 / (1.0 - x) ** 3,
        inverse=lambda y: y / (1.0 + y),
        dinverse=lambda y: 1.0 / (1.0 + y) ** 2,
        d2inverse=lambda y: -2.0 / (1.0 + y) ** 3,
    )
    b1 = Branch(
        forward=lambda x: (1.0 - x) / x,
        dforward=lambda x: -1.0 / x**2,
        d2forward=lambda x: 2.0 / x**3,
        inverse=lambda y: 1.0 / (1.0 + y),
        dinverse=lambda y: -1.0 / (1.0 + y) ** 2,
        d2inverse=lambda y: 2.0 / (1.0 + y) ** 3,
    )
    return MapModel("farey", UNIT_INTERVAL, (0.0, 0.5, 1.0), (b0, b1),
                    density=_one_over_x())


def _one_over_x() -> InvariantDensity:
    return InvariantDensity(
        h=lambda x: 1.0 / x,
        dh=lambda x: -1.0 / x**2,
        antiderivative=lambda x: -np.log(x),
        antiderivative_inverse=lambda s: np.exp(-s),
    )


def _t_alpha(alpha: float) -> MapModel:
    if not (0.0 < alpha < 1.0):
        raise MapError(f"alpha={alpha!r} outside valid range (0, 1)")
    e = 1.0 - alpha
    a1 = 2.0 ** (alpha - 1.0)

    def psi0(y):
        return y / (1.0 + y) ** e

    def dpsi0(y):
        return (1.0 + alpha * y) / (1.0 + y) ** (2.0 - alpha)

    def d2psi0(y):
        return -e * (2.0 + alpha * y) / (1.0 + y) ** (3.0 - alpha)

    def b0(x):
        x = np.asarray(x, dtype=float)
        # psi0 is concave with psi0(y) <= y, so y = x is a lower bracket
        return solve_increasing(psi0, dpsi0, x, x, np.minimum(2.0 * x + 1e-300, 1.0), x0=x)

    def db0(x):
        return 1.0 / dpsi0(b0(x))

    def d2b0(x):
        y = b0(x)
        return -d2psi0(y) / dpsi0(y) ** 3

    p = 1.0 / (alpha - 1.0)
    b_0 = Branch(b0, db0, d2b0, psi0, dpsi0, d2psi0)
    b_1 = Branch(
        forward=lambda x: x**p - 1.0,
        dforward=lambda x: p * x ** (p - 1.0),
        d2forward=lambda x: p * (p - 1.0) * x ** (p - 2.0),
        inverse=lambda y: (1.0 + y) ** (alpha - 1.0),
        dinverse=lambda y: -e / (1.0 + y) ** (2.0 - alpha),
        d2inverse=lambda y: (2.0 - alpha) * e / (1.0 + y) ** (3.0 - alpha),
    )
    return MapModel(f"t_alpha({alpha:g})", UNIT_INTERVAL, (0.0, a1, 1.0), (b_0, b_1),
                    density=_one_over_x(), params={"alpha": alpha})


def _pm_quadratic() -> MapModel:
    b0 = Branch(
        forward=lambda x: x + x * x,
        dforward=lambda x: 1.0 + 2.0 * x,
        d2forward=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        inverse=lambda y: 2.0 * y / (1.0 + np.sqrt(1.0 + 4.0 * y)),
        dinverse=lambda y: 1.0 / np.sqrt(1.0 + 4.0 * y),
        d2inverse=lambda y: -2.0 / (1.0 + 4.0 * y) ** 1.5,
    )
    b1 = Branch(
        forward=lambda x: x + x * x - 1.0,
        dforward=lambda x: 1.0 + 2.0 * x,
        d2forward=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        inverse=lambda y: 0.5 * (np.sqrt(5.0 + 4.0 * y) - 1.0),
        dinverse=lambda y: 1.0 / np.sqrt(5.0 + 4.0 * y),
        d2inverse=lambda y: -2.0 / (5.0 + 4.0 * y) ** 1.5,
    )
    dens = InvariantDensity(
        h=lambda x: 1.0 / x + 1.0 / (1.0 + x),
        dh=lambda x: -1.0 / x**2 - 1.0 / (1.0 + x) ** 2,
        antiderivative=lambda x: math.log(2.0) - np.log(x) - np.log1p(x),
        antiderivative_inverse=lambda s: 4.0 * np.exp(-s) / (1.0 + np.sqrt(1.0 + 8.0 * np.exp(-s))),
    )
    return MapModel("pm_quadratic", UNIT_INTERVAL, (0.0, GOLDEN_CUT, 1.0), (b0, b1),
                    density=dens)


def _pm_halfline() -> MapModel:
    # Conjugate of x + x^2 mod 1 under Phi(x) = ln(2 / (x (1 + x))).
    def s_root(t):
        # S = sqrt(1 + 8 e^{-t})
        return np.sqrt(1.0 + 8.0 * np.exp(-np.asarray(t, dtype=float)))

    def dpsi1(t):
        r = 8.0 * np.exp(-np.asarray(t, dtype=float))
        s = np.sqrt(1.0 + r)
        return r / (2.0 * s * (1.0 + s))

    def d2psi1(t):
        s = s_root(t)
        return -(s * s - 1.0) / (4.0 * s**3)

    b0 = Branch(
        forward=lambda x: x - np.log1p(2.0 * np.exp(-x)),
        dforward=lambda x: 1.0 + 2.0 / (np.exp(x) + 2.0),
        d2forward=lambda x: -2.0 * np.exp(x) / (np.exp(x) + 2.0) ** 2,
        inverse=lambda t: t + np.log1p(8.0 * np.exp(-t) / (2.0 * (1.0 + s_root(t)))),
        dinverse=lambda t: 1.0 - dpsi1(t),
        d2inverse=lambda t: -d2psi1(t),
    )
    b1 = Branch(
        # 2 e^{-x} - 1 = expm1(ln 2 - x) keeps precision next to the cut
        forward=lambda x: x - np.log(np.expm1(LN2 - x)),
        dforward=lambda x: 1.0 - 1.0 / np.expm1(x - LN2),
        d2forward=lambda x: np.exp(x - LN2) / np.expm1(x - LN2) ** 2,
        inverse=lambda t: math.log(4.0) - np.log1p(s_root(t)),
        dinverse=dpsi1,
        d2inverse=d2psi1,
    )
    return MapModel("pm_halfline", HALF_LINE, (math.inf, math.log(2.0), 0.0), (b0, b1),
                    gap=lambda x: np.log1p(2.0 * np.exp(-np.asarray(x, dtype=float))))


def build_builtin(name: str, **params) -> MapModel:
    """Construct one of the built-in families.

    >>> build_builtin("farey")(np.array([2 / 3]))
    array([0.5])
    """
    if name == "farey":
        return _farey()
    if name == "t_alpha":
        if "alpha" not in params:
            raise MapError("t_alpha needs parameter alpha in (0, 1)")
        return _t_alpha(float(params["alpha"]))
    if name == "pm_quadratic":
        return _pm_quadratic()
    if name == "pm_halfline":
        return _pm_halfline()
    raise MapError(f"unknown family {name!r}; expected one of {', '.join(BUILTIN_FAMILIES)}")


# ------------------------------------------------------------- diagnostics

def unit_grid(n: int, lo: float = 1e-8, hi: float = 1.0) -> np.ndarray:
    """Geometric grid on (0, 1] clustered at the indifferent end."""
    return np.geomspace(lo, hi, n)


def half_grid(n: int, lo: float = 0.0, hi: float = 40.0) -> np.ndarray:
    return np.linspace(lo, hi, n)


def sample_codomain(m: MapModel, resolution: int) -> np.ndarray:
    if m.kind == UNIT_INTERVAL:
        return np.concatenate([unit_grid(resolution // 2, 1e-10, 0.5),
                               np.linspace(0.5, 1.0, resolution - resolution // 2 + 1)[1:]])
    return np.concatenate([np.linspace(0.0, 5.0, resolution // 2, endpoint=False),
                           half_grid(resolution - resolution // 2, 5.0, 40.0)])


def verify_invariant_density(m: MapModel, resolution: int = 4096) -> float:
    """Sup-norm residual of the transfer identity on a sampled grid.

    Unit interval: relative residual of ``sum_j |psi_j'| h(psi_j) = h``.
    Half-line: ``|sum_j psi_j' - 1|`` (Lebesgue preservation).
    """
    y = sample_codomain(m, resolution)
    if m.kind == UNIT_INTERVAL:
        y = y[y > 0]
        h = m.density.h
        total = sum(np.abs(m.dinverse(j, y)) * h(m.inverse(j, y)) for j in range(m.branch_count))
        return float(np.max(np.abs(total - h(y)) / h(y)))
    total = sum(np.abs(m.dinverse(j, y)) for j in range(m.branch_count))
    return float(np.max(np.abs(total - 1.0)))


def round_trip_error(m: MapModel, resolution: int = 1024) -> float:
    """max_j |b_j(psi_j(y)) - y| over sampled y."""
    y = sample_codomain(m, resolution)
    if m.kind == UNIT_INTERVAL:
        y = y[(y > 0) & (y < 1)]
    else:
        # beyond ~8 the preimage under a contracting branch is no longer
        # resolvable in double precision
        y = y[(y > 0) & (y <= 8.0)]
    worst = 0.0
    for j, br in enumerate(m.branches):
        x = br.inverse(y)
        worst = max(worst, float(np.max(np.abs(br.forward(x) - y))))
    return worst


def preimages(m: MapModel, y) -> Sequence[np.ndarray]:
    return [m.inverse(j, y) for j in range(m.branch_count)]


# ------------------------------------------------------- assumption checks

PASS, FAIL, NOT_CHECKED = "pass", "fail", "not_checked"
UNIT_ASSUMPTIONS = tuple(f"A{i}" for i in range(1, 9))
HALF_ASSUMPTIONS = tuple(f"B{i}" for i in range(1, 7))
_TOL = 1e-9
_EPS = np.finfo(float).eps


@dataclass
class AssumptionReport:
    """Sampled verdicts for each structural assumption.

    ``witnesses[name]`` is ``(x, message)`` for every failure; ``constants``
    holds sampled expansion/distortion constants where one is defined.
    """

    map_name: str
    status: dict
    witnesses: dict
    constants: dict
    sampling_resolution: int

    def failures(self) -> list:
        return [k for k, v in self.status.items() if v == FAIL]

    @property
    def ok(self) -> bool:
        return not self.failures()

    def summary_lines(self) -> list:
        lines = []
        for name, st in self.status.items():
            line = f"{name}: {st}"
            if name in self.witnesses:
                x, msg = self.witnesses[name]
                line += f" (x={x:.17g}: {msg})"
            lines.append(line)
        return lines


def _first_bad(x: np.ndarray, bad: np.ndarray, score: np.ndarray):
    if not bad.any():
        return None
    i = int(np.argmax(np.where(bad, score, -np.inf)))
    return float(x[i])


def _dd_check(x: np.ndarray, f: np.ndarray, order: int, sign: int, tol: float = _TOL):
    """Worst violation of ``sign * D^order f >= -tol`` by divided differences.

    A round-off floor proportional to ``eps |f| / dx^order`` is added to the
    tolerance. Returns the witness abscissa or ``None``.
    """
    dx = np.diff(x)
    d1 = np.diff(f) / dx
    if order == 1:
        floor = 8 * _EPS * np.maximum(np.abs(f[1:]), np.abs(f[:-1])) / dx
        viol = -sign * d1 - (tol + floor)
        xm = 0.5 * (x[1:] + x[:-1])
    else:
        d2 = 2.0 * np.diff(d1) / (x[2:] - x[:-2])
        scale = np.maximum(np.maximum(np.abs(f[2:]), np.abs(f[1:-1])), np.abs(f[:-2]))
        floor = 32 * _EPS * scale / (dx[1:] * dx[:-1])
        viol = -sign * d2 - (tol + floor)
        xm = x[1:-1]
    return _first_bad(xm, viol > 0, viol)


def _branch_samples(m: MapModel, j: int, n: int) -> np.ndarray:
    lo, hi = m.branch_domain(j)
    if m.kind == UNIT_INTERVAL:
        if j == 0:
            return np.unique(np.concatenate([np.geomspace(1e-12, hi, n // 2),
                                             np.linspace(0.0, hi, n // 2)[1:]]))
        return np.linspace(lo, hi, n)
    if j == 0:
        return np.unique(np.concatenate([np.linspace(lo, 8.0, n // 2), np.linspace(8.0, 40.0, n // 2)]))
    # b_j blows up at one end of a bounded half-line branch; stay inside it
    span = hi - lo
    inset = np.geomspace(1e-8 * span, 0.5 * span, n // 2)
    return np.unique(np.concatenate([lo + inset, hi - inset, np.linspace(lo, hi, n)[1:-1]]))


def _expansion(m: MapModel, n: int, status: dict, witnesses: dict, constants: dict, key: str):
    worst_x, lam = None, math.inf
    for j in range(1, m.branch_count):
        x = _branch_samples(m, j, n)
        d = np.abs(m.branches[j].dforward(x))
        i = int(np.argmin(d))
        if d[i] < lam:
            lam, worst_x = float(d[i]), float(x[i])
    constants[f"{key}_Lambda"] = lam
    if lam > 1.0 + _TOL:
        status[key] = PASS
    else:
        status[key] = FAIL
        witnesses[key] = (worst_x, f"|T'(x)| = {lam:.6g} is not > 1")


def _distortion(m: MapModel, n: int, status: dict, witnesses: dict, constants: dict, key: str,
                cap: float = 1e8):
    k_sup, where = 0.0, None
    for j, br in enumerate(m.branches):
        x = _branch_samples(m, j, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(br.d2forward(x)) / br.dforward(x) ** 2
        r = np.where(np.isfinite(r), r, np.inf)
        i = int(np.argmax(r))
        if r[i] > k_sup:
            k_sup, where = float(r[i]), float(x[i])
    constants[f"{key}_K"] = k_sup
    if k_sup <= cap:
        status[key] = PASS
    else:
        status[key] = FAIL
        witnesses[key] = (where, f"|T''|/|T'|^2 = {k_sup:.6g} exceeds {cap:g}")


def _record(status, witnesses, key, checks):
    """``checks`` is a list of ``(witness_or_None, message)``."""
    for wx, msg in checks:
        if wx is not None:
            status[key] = FAIL
            witnesses[key] = (wx, msg)
            return
    status[key] = PASS


def _check_unit(m: MapModel, n: int, status, witnesses, constants):
    h = m.density.h
    status["A1"] = NOT_CHECKED
    _expansion(m, n, status, witnesses, constants, "A2")
    _distortion(m, n, status, witnesses, constants, "A3")

    x0 = _branch_samples(m, 0, n)
    x0 = x0[x0 > 0]
    b0 = m.branches[0]
    d1 = b0.dforward(x0)
    d2 = b0.d2forward(x0)
    tiny = np.array([1e-12])
    checks = [
        (_first_bad(x0, d2 < -_TOL, -d2), "T_0'' < 0 (not convex)"),
        (_first_bad(x0, d1 <= 1.0, 1.0 - d1), "T_0'(x) <= 1 inside (0, a_1]"),
        (1e-12 if abs(float(b0.forward(tiny)[0])) > 1e-10 else None, "T_0(0) != 0"),
        (1e-12 if abs(float(b0.dforward(tiny)[0]) - 1.0) > 1e-6 else None, "T_0'(0) != 1"),
    ]
    _record(status, witnesses, "A4", checks)

    y = np.unique(np.concatenate([np.geomspace(1e-10, 1.0, n // 2), np.linspace(0.0, 1.0, n // 2)]))
    yp = y[y > 0]
    if m.branch_count != 2:
        for key in ("A5", "A6", "A7", "A8"):
            status[key] = NOT_CHECKED
        return
    dpsi1 = m.dinverse(1, y)
    _record(status, witnesses, "A5", [(_first_bad(y, dpsi1 >= 0, dpsi1), "psi_1' >= 0 (not decreasing)")])

    s1 = m.dinverse(0, y) + dpsi1
    s2 = m.d2inverse(0, y) + m.d2inverse(1, y)
    _record(status, witnesses, "A6", [
        (_first_bad(y, s1 < -_TOL, -s1), "(psi_0 + psi_1)' < 0"),
        (_first_bad(y, s2 > _TOL, s2), "(psi_0 + psi_1)'' > 0"),
    ])

    yu = np.linspace(0.0, 1.0, n)[1:]
    f = m.dinverse(0, yu) * h(m.inverse(0, yu)) / h(yu)
    _record(status, witnesses, "A7", [
        (_dd_check(yu, f, 1, -1, tol=0.0), "psi_0' h(psi_0)/h not decreasing"),
        (_first_bad(yu[1:], np.diff(f) >= 0, np.diff(f)), "psi_0' h(psi_0)/h not strictly decreasing"),
        (_dd_check(yu, f, 2, +1), "psi_0' h(psi_0)/h not convex"),
    ])

    a8 = m.dinverse(0, yp) * h(m.inverse(0, yp)) + m.dinverse(1, yp) * h(m.inverse(1, yp))
    _record(status, witnesses, "A8", [(_first_bad(yp, a8 < -_TOL * h(yp), -a8), "sum psi_j' h(psi_j) < 0")])


def _check_half(m: MapModel, n: int, status, witnesses, constants):
    status["B1"] = NOT_CHECKED
    _expansion(m, n, status, witnesses, constants, "B2")
    _distortion(m, n, status, witnesses, constants, "B3")

    b0 = m.branches[0]
    x = np.linspace(m.a1, 40.0, n)
    u = m.gap(x) if m.gap is not None else x - b0.forward(x)
    upp = -b0.d2forward(x)
    _record(status, witnesses, "B4", [
        (_first_bad(x, u <= 0, -u), "u(x) <= 0"),
        (_dd_check(x, u, 1, -1, tol=0.0), "u not decreasing"),
        (_first_bad(x, upp < -_TOL, -upp), "u'' < 0 (not convex)"),
        (_dd_check(x, upp, 1, -1), "u'' not decreasing"),
        (40.0 if float(u[-1]) > 1e-6 else None, "u does not vanish at infinity"),
    ])

    res = verify_invariant_density(m, n)
    constants["B5_residual"] = res
    _record(status, witnesses, "B5", [(0.0 if res > 1e-8 else None,
                                       f"Lebesgue transfer residual {res:.3g} > 1e-8")])

    checks = []
    for j in range(1, m.branch_count):
        xs = _branch_samples(m, j, n)
        br = m.branches[j]
        d1, d2 = br.dforward(xs), br.d2forward(xs)
        checks.append((_first_bad(xs, d1 <= 0, -d1), f"T_{j}' <= 0"))
        checks.append((_first_bad(xs, d2 < -_TOL, -d2), f"T_{j}'' < 0 (not convex)"))
    _record(status, witnesses, "B6", checks)


def check_assumptions(m: MapModel, resolution: int = 1024) -> AssumptionReport:
    """Sample every structural assumption of ``m`` on a grid.

    Smoothness is never certified and is reported as ``not_checked``. A
    ``fail`` comes with the sample point where the inequality broke worst.
    Sampled constants are reported but a pass only witnesses, never proves.
    """
    if resolution < 64:
        raise MapError(f"resolution={resolution} too small (need >= 64)")
    status: dict = {}
    witnesses: dict = {}
    constants: dict = {}
    if m.kind == UNIT_INTERVAL:
        if m.density is None:
            raise MapError("checking A7/A8 needs an invariant density")
        _check_unit(m, resolution, status, witnesses, constants)
        order = UNIT_ASSUMPTIONS
    else:
        _check_half(m, resolution, status, witnesses, constants)
        order = HALF_ASSUMPTIONS
    status = {k: status[k] for k in order}
    return AssumptionReport(m.name, status, witnesses, constants, resolution)
