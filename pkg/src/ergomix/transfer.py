"""Node-exact transfer operator and persistent-monotonicity diagnostics.

``(Pg)(x)`` is evaluated at every grid node from the exact inverse branches:

* unit interval, relative to ``mu = h dx``:
  ``Pg(x) = sum_j |psi_j'(x)| h(psi_j(x)) / h(x) * g(psi_j(x))``
* half-line, relative to Lebesgue: ``Pg(x) = sum_j |psi_j'(x)| g(psi_j(x))``

Interpolation only reads ``g`` at the preimages; no matrix is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .grid import DD_TOL, EPS, GridDensity, GridError, MonotoneInterpolant
from .maps import UNIT_INTERVAL, MapModel

MASS_TOL = 1e-5


class TransferError(ValueError):
    pass


class TransferOperator:
    """``P`` for a fixed map and node set, with preimages and weights cached."""

    def __init__(self, m: MapModel, nodes: np.ndarray):
        self.map = m
        self.nodes = np.asarray(nodes, dtype=float)
        x = self.nodes
        self.points = []
        self.weights = []
        if m.kind == UNIT_INTERVAL:
            h = m.density.h
            pos = x > 0
            xp = x[pos]
            for j in range(m.branch_count):
                q = np.empty_like(x)
                w = np.empty_like(x)
                q[pos] = m.inverse(j, xp)
                w[pos] = np.abs(m.dinverse(j, xp)) * h(q[pos]) / h(xp)
                # at the indifferent point psi_0(0) = 0 carries all the weight
                if (~pos).any():
                    q[~pos] = m.inverse(j, np.zeros(1))[0]
                    w[~pos] = 1.0 if j == 0 else 0.0
                self.points.append(q)
                self.weights.append(w)
        else:
            for j in range(m.branch_count):
                self.points.append(m.inverse(j, x))
                self.weights.append(np.abs(m.dinverse(j, x)))

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        """``P`` on raw node values, which may be signed or complex."""
        values = np.asarray(values)
        if np.iscomplexobj(values):
            return self.apply_array(values.real) + 1j * self.apply_array(values.imag)
        interp = MonotoneInterpolant(self.nodes, values, self.map.kind)
        total = np.zeros_like(self.nodes)
        for q, w in zip(self.points, self.weights):
            total += w * interp(q)
        return total

    def apply_values(self, g: GridDensity):
        interp = g.interpolant
        total = np.zeros_like(self.nodes)
        outside = 0
        for q, w in zip(self.points, self.weights):
            outside += interp.outside(q)
            total += w * interp(q)
        return total, outside

    def __call__(self, g: GridDensity) -> GridDensity:
        if not np.array_equal(g.nodes, self.nodes):
            raise GridError("density lives on a different grid than the operator")
        values, outside = self.apply_values(g)
        # each application adds a few ulps (interpolation plus weighted sum)
        return replace(g, values=values, mass=g.mass, extrapolated=outside,
                       roundoff=g.roundoff + 16 * EPS)


def apply_transfer(m: MapModel, g: GridDensity) -> GridDensity:
    """One application of ``P``. The declared mass is carried over.

    Preimages outside the node range read ``g`` as a constant; how many did
    so is stored in ``extrapolated`` of the result.
    """
    _check_compatible(m, g)
    return TransferOperator(m, g.nodes)(g)


def _check_compatible(m: MapModel, g: GridDensity) -> None:
    if g.kind != m.kind:
        raise TransferError(f"{m.kind} map cannot act on a {g.kind} density")
    if m.kind == UNIT_INTERVAL and (g.nodes[0] < 0 or g.nodes[-1] > 1):
        raise TransferError("unit-interval density has nodes outside [0, 1]")


@dataclass
class TransferReport:
    n: int
    mass_drift: List[float] = field(default_factory=list)
    monotone_up_to: int = -1
    concave_up_to: int = -1
    plateau_values: List[float] = field(default_factory=list)
    extrapolated: List[int] = field(default_factory=list)
    tolerance: float = MASS_TOL
    aborted_at: Optional[int] = None

    @property
    def failed(self) -> bool:
        return self.aborted_at is not None or any(d > self.tolerance for d in self.mass_drift)


def _monotone(g: GridDensity, kind: str, tol: float) -> bool:
    if kind == UNIT_INTERVAL:
        return g.is_monotone_increasing(tol)
    return g.is_monotone_decreasing(tol)


def iterate_transfer(m: MapModel, g: GridDensity, n: int, *, stride: int = 1,
                     mass_tol: float = MASS_TOL, dd_tol: float = DD_TOL,
                     delta: Optional[float] = None, track_shape: bool = True):
    """Iterate ``P`` ``n`` times.

    Returns ``(iterates, report)`` where ``iterates`` holds ``P^k g`` for
    ``k = 0, stride, 2 stride, ...`` and always the last computed one. The
    monotone direction is increasing on the unit interval and decreasing on
    the half-line. If ``delta`` is given, ``P^k g(delta)`` is recorded for
    each ``k``. A per-step relative mass change above ``mass_tol`` stops the
    iteration and the partial sequence is returned.
    """
    if n < 0:
        raise TransferError("n must be nonnegative")
    _check_compatible(m, g)
    op = TransferOperator(m, g.nodes)
    report = TransferReport(n=0, tolerance=mass_tol)
    iterates = [g]
    cur = g
    mono_ok = conc_ok = True
    prev_mass = g.quadrature_mass() if g.mass is not None else None

    def shape(k: int, d: GridDensity):
        nonlocal mono_ok, conc_ok
        if not track_shape:
            return
        if mono_ok and _monotone(d, m.kind, dd_tol):
            report.monotone_up_to = k
        else:
            mono_ok = False
        if m.kind == UNIT_INTERVAL:
            if conc_ok and d.is_concave(dd_tol):
                report.concave_up_to = k
            else:
                conc_ok = False

    shape(0, g)
    if delta is not None:
        report.plateau_values.append(float(g(np.array([delta]))[0]))
    for k in range(1, n + 1):
        cur = op(cur)
        report.n = k
        report.extrapolated.append(cur.extrapolated)
        if prev_mass is not None:
            mk = cur.quadrature_mass()
            drift = abs(mk - prev_mass) / prev_mass
            report.mass_drift.append(drift)
            prev_mass = mk
            if drift > mass_tol:
                report.aborted_at = k
                iterates.append(cur)
                break
        shape(k, cur)
        if delta is not None:
            report.plateau_values.append(float(cur(np.array([delta]))[0]))
        if k % stride == 0 or k == n:
            iterates.append(cur)
    return iterates, report


@dataclass
class ConeCheck:
    preserved: bool
    witnesses: list
    image: GridDensity


def check_cone_preservation(m: MapModel, g: GridDensity, tol: float = DD_TOL) -> ConeCheck:
    """Test whether ``P`` keeps an increasing concave ``g`` increasing and concave."""
    if m.kind != UNIT_INTERVAL:
        raise TransferError("the increasing-concave cone is a unit-interval notion")
    if not (g.is_monotone_increasing(tol) and g.is_concave(tol)):
        raise TransferError("g is not in the cone (needs increasing and concave)")
    pg = apply_transfer(m, g)
    witnesses = []
    floor1 = tol + pg._noise(1)
    d1 = pg.first_differences()
    bad = np.flatnonzero(d1 < -floor1)
    if bad.size:
        witnesses.append((float(pg.nodes[bad[0]]), "first divided difference negative"))
    d2 = pg.second_differences()
    bad = np.flatnonzero(d2 > tol + pg._noise(2))
    if bad.size:
        witnesses.append((float(pg.nodes[bad[0] + 1]), "second divided difference positive"))
    return ConeCheck(not witnesses, witnesses, pg)


def truncate_plateau(g: GridDensity, delta: float) -> GridDensity:
    """``gamma(x) = min(g(delta), g(x))``: ``g`` below ``delta``, flat above.

    ``delta`` is inserted as a node so the plateau starts exactly there.
    """
    if not (g.nodes[0] <= delta <= g.nodes[-1]):
        raise TransferError(f"delta={delta!r} outside node range [{g.nodes[0]}, {g.nodes[-1]}]")
    if not g.is_monotone_increasing():
        raise TransferError("plateau truncation needs an increasing density")
    level = float(g(np.array([delta]))[0])
    nodes = np.union1d(g.nodes, [delta])
    values = np.where(nodes >= delta, level, np.minimum(g(nodes), level))
    # keep the original node values exactly below delta
    keep = np.isin(nodes, g.nodes) & (nodes < delta)
    values[keep] = np.minimum(g.values[np.isin(g.nodes, nodes[keep])], level)
    out = GridDensity(nodes, values, g.kind, g.density)
    return replace(out, mass=out.quadrature_mass())
