"""The measure-theoretic change of variables ``Phi(x) = int_x^1 h``.

``Phi`` pushes ``mu = h dx`` on (0, 1) to Lebesgue measure on (0, inf), so a
unit-interval map ``T_o`` becomes the Lebesgue-preserving half-line map
``Phi o T_o o Phi^{-1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .grid import GridDensity, half_nodes
from .maps import (HALF_LINE, UNIT_INTERVAL, Branch, InvariantDensity, MapError, MapModel,
                   solve_increasing)

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature+root_find"

# Phi^{-1} is searched for in t = log x over this range
_LOG_LO = -700.0


class ConjugationError(ValueError):
    pass


@dataclass(frozen=True)
class Conjugation:
    phi: Callable
    phi_inverse: Callable
    density: InvariantDensity
    mode: str
    tolerance: float = 1e-12

    def dphi(self, x):
        return -self.density.h(x)

    def d2phi(self, x):
        return -self.density.dh(x)

    def check_inverse(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(np.max(np.abs(self.phi(self.phi_inverse(s)) - s)))


class _QuadraturePhi:
    """``Phi`` tabulated by per-cell Gauss rules on a geometric grid.

    Cells have a fixed log-width; the value at ``x`` is the cumulative table
    at the next node up plus one Gauss rule on the partial cell. Each cell is
    integrated twice (8 and 16 points) and disagreement above the tolerance
    is reported with the offending subinterval.
    """

    def __init__(self, h: Callable, tol: float, width: float = 0.25):
        self.h = h
        self.width = width
        n = int(math.ceil(-_LOG_LO / width))
        self.logs = np.linspace(_LOG_LO, 0.0, n + 1)
        lo, hi = self.logs[:-1], self.logs[1:]
        coarse = self._cell(lo, hi, 8)
        fine = self._cell(lo, hi, 16)
        err = np.abs(coarse - fine)
        bad = err > tol * np.maximum(np.abs(fine), 1.0)
        if bad.any():
            i = int(np.argmax(bad))
            raise ConjugationError(
                f"quadrature of h did not converge on [{math.exp(lo[i]):.6g}, {math.exp(hi[i]):.6g}]"
                f" (difference {err[i]:.3g})")
        # cum[i] = int_{exp(logs[i])}^1 h
        self.cum = np.concatenate([np.cumsum(fine[::-1])[::-1], [0.0]])

    def _cell(self, lo, hi, order):
        t, w = leggauss(order)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        u = mid[:, None] + half[:, None] * t[None, :]
        x = np.exp(u)
        return np.sum(half[:, None] * w[None, :] * self.h(x) * x, axis=1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lx = np.log(x)
        if np.any(lx < _LOG_LO) or np.any(x > 1.0):
            raise ConjugationError("Phi evaluated outside the tabulated range")
        i = np.clip(np.searchsorted(self.logs, lx, side="right"), 1, len(self.logs) - 1)
        part = self._cell(lx.ravel(), self.logs[i].ravel(), 16).reshape(x.shape)
        return self.cum[i] + part


def build_conjugation(density: InvariantDensity, tolerance: float = 1e-12) -> Conjugation:
    """``Phi`` from the closed-form antiderivative when present, else by quadrature.

    Without a closed-form inverse, ``Phi^{-1}`` is found by bracketed
    bisection refined by Newton in ``log x`` (``Phi`` is strictly decreasing
    so the bracket is always valid).
    """
    if density.antiderivative is not None:
        phi = density.antiderivative
        mode = CLOSED_FORM
    else:
        phi = _QuadraturePhi(density.h, tol=1e-12)
        mode = QUADRATURE
    if density.antiderivative_inverse is not None and mode == CLOSED_FORM:
        phi_inv = density.antiderivative_inverse
    else:
        def phi_inv(s):
            s = np.asarray(s, dtype=float)
            if np.any(s < 0):
                raise ConjugationError("Phi^{-1} needs s >= 0")
            t = solve_increasing(lambda t: -phi(np.exp(t)),
                                 lambda t: density.h(np.exp(t)) * np.exp(t),
                                 -s, _LOG_LO, 0.0, rtol=1e-15)
            return np.exp(t)
    return Conjugation(phi, phi_inv, density, mode, tolerance)


# -------------------------------------------------------- branch transport

def _transport(f, df, d2f, phi, dphi, d2phi, phi_inv):
    """Branch ``phi o f o phi^{-1}`` with chain-rule derivatives."""

    def forward(s):
        return phi(f(phi_inv(s)))

    def dforward(s):
        x = phi_inv(s)
        return dphi(f(x)) * df(x) / dphi(x)

    def d2forward(s):
        x = phi_inv(s)
        y, d1, p1 = f(x), df(x), dphi(x)
        q1 = dphi(y)
        inner = (d2phi(y) * d1 * d1 + q1 * d2f(x)) / p1 - q1 * d1 * d2phi(x) / (p1 * p1)
        return inner / p1

    return forward, dforward, d2forward


def _transport_branch(br: Branch, phi, dphi, d2phi, phi_inv) -> Branch:
    f, df, d2f = _transport(br.forward, br.dforward, br.d2forward, phi, dphi, d2phi, phi_inv)
    g, dg, d2g = _transport(br.inverse, br.dinverse, br.d2inverse, phi, dphi, d2phi, phi_inv)
    return Branch(f, df, d2f, g, dg, d2g)


def conjugate_map(m: MapModel, c: Conjugation) -> MapModel:
    """The Lebesgue-preserving half-line map ``Phi o T o Phi^{-1}``."""
    if m.kind != UNIT_INTERVAL:
        raise MapError("conjugate_map expects a unit-interval model")
    if c.density.dh is None:
        raise ConjugationError("second derivatives need dh of the density")
    dphi, d2phi = c.dphi, c.d2phi
    branches = tuple(_transport_branch(br, c.phi, dphi, d2phi, c.phi_inverse) for br in m.branches)
    inner = [float(c.phi(np.array([a]))[0]) for a in m.partition_points[1:-1]]
    pts = (math.inf, *inner, 0.0)
    return MapModel(f"conj[{m.name}]", HALF_LINE, pts, branches, params=dict(m.params))


def unconjugate_map(m: MapModel, c: Conjugation) -> MapModel:
    """The unit-interval map ``Phi^{-1} o T o Phi`` carrying ``c``'s density."""
    if m.kind != HALF_LINE:
        raise MapError("unconjugate_map expects a half-line model")
    if c.density.dh is None:
        raise ConjugationError("second derivatives need dh of the density")
    h, dh = c.density.h, c.density.dh

    def dpsi(s):
        return -1.0 / h(c.phi_inverse(s))

    def d2psi(s):
        x = c.phi_inverse(s)
        return -dh(x) / h(x) ** 3

    branches = tuple(_transport_branch(br, c.phi_inverse, dpsi, d2psi, c.phi) for br in m.branches)
    inner = [float(c.phi_inverse(np.array([a]))[0]) for a in m.partition_points[1:-1]]
    pts = (0.0, *inner, 1.0)
    return MapModel(f"unconj[{m.name}]", UNIT_INTERVAL, pts, branches, density=c.density,
                    params=dict(m.params))


# ------------------------------------------------------ density transport

def pushforward_density(g: GridDensity, c: Conjugation, nodes: Optional[np.ndarray] = None,
                        rtol: float = 1e-6) -> GridDensity:
    """Carry a density w.r.t. ``mu`` on (0, 1) to one w.r.t. Lebesgue on (0, inf).

    No Jacobian appears: ``Phi`` maps ``mu`` onto Lebesgue measure, so the
    new density is simply ``g o Phi^{-1}``. Mass is checked to ``rtol``.
    """
    if g.kind != UNIT_INTERVAL:
        raise ConjugationError("pushforward starts from a unit-interval density")
    if g.mass is None:
        raise ConjugationError("pushforward needs a density of finite mass")
    positive = g.nodes[g.nodes > 0]
    s_max = float(c.phi(positive[:1])[0])
    if nodes is None:
        nodes = half_nodes(len(g.nodes), min(s_max, 60.0))
    if nodes[-1] > s_max:
        raise ConjugationError(f"target grid reaches s={nodes[-1]:.6g} beyond the image "
                               f"Phi(x_min)={s_max:.6g} of the source grid")
    values = g(c.phi_inverse(nodes))
    out = GridDensity(nodes, values, HALF_LINE)
    mass_out = out.quadrature_mass()
    mass_in = g.quadrature_mass()
    if abs(mass_out - mass_in) > rtol * abs(mass_in):
        raise ConjugationError(
            f"grid under-resolves the image support: mass {mass_out:.10g} vs {mass_in:.10g}")
    return replace(out, mass=mass_out)
