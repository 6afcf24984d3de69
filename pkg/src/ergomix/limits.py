"""Hitting times, step observables mod q and distributional limit experiments.

The Farey map gets exact treatment. Points are rationals ``p/q`` held as
Python integers, and a whole laminar phase ``x -> x/(1-x)`` repeated ``k``
times collapses to ``p/q -> p/(q - k p)``. Double precision would lose such
orbits near the indifferent fixed point.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .grid import GridDensity, unit_nodes, half_nodes, _GL
from .maps import HALF_LINE, UNIT_INTERVAL, MapModel
from .observables import GlobalObservable, estimate_av
from .parallel import run_chunks


class LimitError(ValueError):
    pass


class BudgetExhausted(LimitError):
    pass


def is_farey(m: MapModel) -> bool:
    return m.name == "farey"


# ------------------------------------------------------------ hitting times

def _farey_hit(p: int, q: int) -> int:
    """Hitting time of ``p/q`` to ``[1/2, 1)``: ``ceil(q/p) - 2`` below 1/2."""
    if 2 * p >= q:
        return 0
    return -(-q // p) - 2


def _farey_hit_direct(p: int, q: int, budget: int) -> int:
    k = 0
    while 2 * p < q:
        q -= p  # x/(1-x) = p/(q-p)
        k += 1
        if k > budget:
            raise BudgetExhausted(f"no hit within {budget} steps")
    return k


def hitting_time(m: MapModel, x, *, accelerate: bool = True, budget: int = 10**7) -> int:
    """Minimal ``k >= 0`` with ``T^k x`` in ``J = [a_1, 1)``.

    For the Farey map ``x`` is converted exactly to a rational (floats are
    dyadic rationals) and the answer is exact either way; ``accelerate``
    picks the closed form over step-by-step iteration. Other maps iterate
    branch 0 in floating point up to ``budget`` steps.
    """
    if m.kind != UNIT_INTERVAL:
        raise LimitError("hitting times are defined for unit-interval maps")
    if is_farey(m):
        fx = Fraction(x)
        if not (0 < fx < 1):
            raise LimitError(f"x={x!r} outside (0, 1)")
        p, q = fx.numerator, fx.denominator
        return _farey_hit(p, q) if accelerate else _farey_hit_direct(p, q, budget)
    xf = float(x)
    if not (0.0 < xf < 1.0):
        raise LimitError(f"x={x!r} outside (0, 1)")
    a1, b0 = m.a1, m.branches[0].forward
    k = 0
    y = np.array([xf])
    while y[0] < a1:
        y = b0(y)
        k += 1
        if k > budget:
            raise BudgetExhausted(f"laminar phase of x={xf!r} exceeds {budget} steps")
    return k


def farey_itinerary(x: Fraction, n: int) -> List[int]:
    """Symbols ``l_0, ..., l_{n-1}`` of ``x`` w.r.t. the level sets ``B_k``."""
    p, q = x.numerator, x.denominator
    out = []
    while len(out) < n:
        if p == 0 or p == q:
            raise LimitError("orbit reached a rational endpoint")
        k = _farey_hit(p, q)
        if k == 0:
            out.append(0)
            p, q = q - p, p
        else:
            take = min(k, n - len(out))
            out.extend(range(k, k - take, -1))
            q -= take * p
    return out


def continued_fraction(x: Fraction, digits: int) -> List[int]:
    p, q = x.numerator, x.denominator
    out = []
    while len(out) < digits and p:
        a, r = divmod(q, p)
        out.append(a)
        p, q = r, p
    return out


def itinerary_from_digits(digits: Sequence[int], n: int) -> List[int]:
    """``(a_1 - 1, ..., 0, a_2 - 1, ..., 0, ...)`` truncated to ``n`` symbols."""
    out: List[int] = []
    for a in digits:
        take = min(a, n - len(out))
        out.extend(range(a - 1, a - 1 - take, -1))
        if len(out) >= n:
            break
    return out


# ----------------------------------------------------- hitting partition

@dataclass(frozen=True)
class HittingPartition:
    """Level sets ``B_k = (beta_{k+1}, beta_k)`` of the hitting time, ``k <= k_max``.

    ``beta`` has ``k_max + 2`` entries; ``r[k] = mu(B_k)``; ``phi_beta[k]``
    is ``Phi(beta_k)``, the measure of ``[beta_k, 1)``.
    """

    beta: np.ndarray
    r: np.ndarray
    phi_beta: np.ndarray
    k_max: int

    def level(self, x) -> np.ndarray:
        """``H(x)`` from the table, ``-1`` below ``beta_{k_max + 1}``."""
        x = np.asarray(x, dtype=float)
        # beta decreasing: index of the first beta_k strictly below x, minus one
        k = np.searchsorted(-self.beta, -x, side="left") - 1
        return np.where(x <= self.beta[-1], -1, np.clip(k, 0, self.k_max))


def build_hitting_partition(m: MapModel, k_max: int, *, method: str = "inverse") -> HittingPartition:
    """``beta_0 = 1``, ``beta_1 = a_1``, ``beta_{k+1} = psi_0(beta_k)``.

    ``method="bisection"`` instead solves ``T_0(x) = beta_k`` on
    ``(0, beta_k)`` by bisection (kept as an independent check). The masses
    ``r_k`` are differences of ``Phi``.
    """
    from .conjugation import build_conjugation

    if m.kind != UNIT_INTERVAL:
        raise LimitError("hitting partitions are built for unit-interval maps")
    if k_max < 1:
        raise LimitError("k_max must be at least 1")
    beta = np.empty(k_max + 2)
    beta[0], beta[1] = 1.0, m.a1
    if is_farey(m) and method == "inverse":
        beta[1:] = 1.0 / np.arange(2, k_max + 3)
    elif method == "inverse":
        psi0 = m.branches[0].inverse
        cur = np.array([m.a1])
        for k in range(2, k_max + 2):
            cur = psi0(cur)
            beta[k] = cur[0]
    elif method == "bisection":
        b0 = m.branches[0].forward
        for k in range(2, k_max + 2):
            lo, hi = 0.0, beta[k - 1]
            target = beta[k - 1]
            if not float(b0(np.array([hi]))[0]) >= target:
                raise LimitError(f"bisection failed to bracket beta_{k}")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if float(b0(np.array([mid]))[0]) < target:
                    lo = mid
                else:
                    hi = mid
            beta[k] = 0.5 * (lo + hi)
    else:
        raise LimitError(f"unknown method {method!r}")
    phi = build_conjugation(m.density).phi
    phi_beta = phi(beta)
    phi_beta[0] = 0.0
    r = np.diff(phi_beta)
    return HittingPartition(beta, r, phi_beta, k_max)


# ----------------------------------------------------------- step observables

def step_observable(f_values: Sequence[complex], q: int, partition: HittingPartition,
                    name: Optional[str] = None) -> GlobalObservable:
    """``F = f_j`` on every ``B_k`` with ``k = j mod q``.

    Below ``beta_{k_max + 1}`` the level sets are not tabulated and ``F``
    returns its average there. Volume integrals are exact cell sums, so
    ``estimate_av`` never resolves the level sets by quadrature; the
    resolved depth is ``Phi(beta_{k_max + 1})``.
    """
    if q < 1:
        raise LimitError("q must be at least 1")
    f = np.asarray(f_values, dtype=complex if np.iscomplexobj(f_values) else float)
    if len(f) != q:
        raise LimitError(f"need {q} values, got {len(f)}")
    av = f.mean()
    k_all = np.arange(partition.k_max + 1)
    fk = f[k_all % q]
    cum = np.concatenate([[0.0], np.cumsum(fk * partition.r)])
    pb = partition.phi_beta

    def ev(x):
        lev = partition.level(x)
        return np.where(lev < 0, av, f[np.maximum(lev, 0) % q])

    def vol(L, m):
        if L > pb[-1] * (1 + 1e-12):
            raise LimitError(f"volume {L:g} deeper than the tabulated partition ({pb[-1]:g})")
        k = int(np.clip(np.searchsorted(pb, L, side="right") - 1, 0, partition.k_max))
        return cum[k] + fk[k] * (L - pb[k])

    sup = float(np.max(np.abs(f)))
    return GlobalObservable(ev, sup, av.item() if hasattr(av, "item") else av,
                            name or f"step_q{q}", False,
                            breakpoints=tuple(partition.beta[1:]), volume_integral=vol,
                            max_depth=float(pb[-1]))


def residue_observable(q: int, partition: HittingPartition) -> GlobalObservable:
    """``H_q = H mod q`` (``f_j = j``), whose average is ``(q - 1) / 2``."""
    return step_observable(np.arange(q, dtype=float), q, partition, name=f"H_{q}")


def residue_partial_sums(partition: HittingPartition, q: int, k: int) -> np.ndarray:
    """``S_j = sum_{p <= k, p = j mod q} r_p / sum_{p <= k} r_p`` for each ``j``."""
    r = partition.r[: k + 1]
    idx = np.arange(len(r)) % q
    sums = np.array([math.fsum(r[idx == j]) for j in range(q)])
    return sums / math.fsum(r)


# --------------------------------------------------------------- sampling

class InverseCDFSampler:
    """Sampler for ``mu_g`` (or ``g dx`` on the half-line) from a tabulated CDF.

    The CDF is accumulated cell by cell with Gauss rules on ``knots``; within
    a cell the inverse is linear.
    """

    def __init__(self, g: GridDensity, knots: Optional[np.ndarray] = None, n_knots: int = 2**16):
        if knots is None:
            if g.kind == UNIT_INTERVAL:
                knots = unit_nodes(n_knots, max(g.nodes[1], 1e-300))
            else:
                knots = half_nodes(n_knots, g.nodes[-1])
        self.knots = np.asarray(knots, dtype=float)
        t, w = _GL[8]
        a, b = self.knots[:-1], self.knots[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * t[None, :]
        wt = half[:, None] * w[None, :]
        if g.kind == UNIT_INTERVAL:
            wt = wt * g.density.h(x)
        cell = np.sum(wt * g(x.ravel()).reshape(x.shape), axis=1)
        if np.any(cell < 0) or not np.all(np.isfinite(cell)):
            raise LimitError("sampler CDF is not monotone (grid defect)")
        cdf = np.concatenate([[0.0], np.cumsum(cell)])
        if cdf[-1] <= 0:
            raise LimitError("density has zero mass")
        self.cdf = cdf / cdf[-1]
        if np.any(np.diff(self.cdf) < 0):
            raise LimitError("sampler CDF is not monotone (grid defect)")

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        i = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, len(self.knots) - 2)
        c0, c1 = self.cdf[i], self.cdf[i + 1]
        frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.5)
        return self.knots[i] + frac * (self.knots[i + 1] - self.knots[i])


# ------------------------------------------------------- Farey exact orbits

def _to_rational(x: float, rng: np.random.Generator, bits: int):
    """Exact ``p/q`` for ``x`` with ``bits`` random bits appended below its last bit."""
    f, e = math.frexp(x)
    mant = int(f * (1 << 53))
    low = int.from_bytes(rng.bytes((bits + 7) // 8), "little") >> ((8 - bits % 8) % 8)
    p = (mant << bits) | low
    shift = bits + 53 - e
    return p, 1 << shift


def _farey_advance(p: int, q: int, n: int):
    while n > 0:
        if p == 0 or p == q:
            return None
        if 2 * p < q:
            k = -(-q // p) - 2
            if k >= n:
                return p, q - n * p
            q -= k * p
            n -= k
        else:
            p, q = q - p, p
            n -= 1
    return p, q


def _farey_step(p: int, q: int):
    if 2 * p < q:
        return p, q - p
    return q - p, p


def _farey_log_inv(p: int, q: int) -> float:
    """``ln(q/p)`` for big integers without overflow."""
    return math.log(q) - math.log(p)


def _residue_chunk(size, seq, sampler, n, q_mod, bits):
    rng = np.random.default_rng(seq)
    xs = sampler(rng, size)
    counts = np.zeros(q_mod, dtype=np.int64)
    dead = 0
    for x in xs:
        if not (0.0 < x < 1.0):
            dead += 1
            continue
        st = _farey_advance(*_to_rational(float(x), rng, bits), n)
        if st is None or st[0] == 0:
            dead += 1
            continue
        counts[_farey_hit(*st) % q_mod] += 1
    return counts, dead


def _residue_chunk_float(size, seq, m, sampler, n, q_mod, partition):
    rng = np.random.default_rng(seq)
    x = m.iterate(sampler(rng, size), n)
    lev = partition.level(x)
    counts = np.bincount(lev[lev >= 0] % q_mod, minlength=q_mod)
    return counts.astype(np.int64), int(np.count_nonzero(lev < 0))


@dataclass
class EmpiricalDistribution:
    support: np.ndarray
    pmf: np.ndarray
    sample_count: int
    rng_seed: int
    discarded: int = 0

    def tv_to_uniform(self) -> float:
        k = len(self.pmf)
        return 0.5 * float(np.sum(np.abs(self.pmf - 1.0 / k)))

    def tv(self, other: "EmpiricalDistribution") -> float:
        return 0.5 * float(np.sum(np.abs(self.pmf - other.pmf)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("residue,probability\n")
        for s, p in zip(self.support, self.pmf):
            buf.write(f"{int(s)},{p:.17g}\n")
        return buf.getvalue()


def simulate_residue_distribution(m: MapModel, g: Union[GridDensity, Callable], q: int, n: int,
                                  N: int, seed: int, *, bits: int = 2048,
                                  workers: Optional[int] = None,
                                  partition: Optional[HittingPartition] = None
                                  ) -> EmpiricalDistribution:
    """Distribution of ``H(T^n x) mod q`` for ``x ~ mu_g``.

    Farey orbits run in exact rational arithmetic with laminar phases taken
    in one step. Other maps iterate in floating point and read ``H`` off a
    tabulated partition.
    """
    if N < 1000:
        raise LimitError("N must be at least 1000")
    sampler = g if callable(g) and not isinstance(g, GridDensity) else InverseCDFSampler(g)
    if is_farey(m):
        parts = run_chunks(_residue_chunk, N, seed, workers=workers, args=(sampler, n, q, bits))
    else:
        partition = partition or build_hitting_partition(m, 10**5)
        parts = run_chunks(_residue_chunk_float, N, seed, workers=workers,
                           args=(m, sampler, n, q, partition))
    counts = sum(c for c, _ in parts)
    dead = sum(d for _, d in parts)
    total = int(counts.sum())
    if total == 0:
        raise LimitError("every orbit was lost")
    return EmpiricalDistribution(np.arange(q), counts / total, total, seed, dead)


# ---------------------------------------------------------- Birkhoff sums

def k_for(schedule, n: int) -> int:
    """Averaging length: a fixed integer, or ``floor(sqrt(n))`` for ``"sqrt"``."""
    if schedule == "sqrt":
        return max(1, math.isqrt(n))
    k = int(schedule)
    if k < 1:
        raise LimitError("k must be at least 1")
    return k


def _birkhoff_chunk_farey(size, seq, sampler, n, k, thetas, bits, f_of_log):
    rng = np.random.default_rng(seq)
    xs = sampler(rng, size)
    acc = np.zeros(len(thetas), dtype=complex)
    used = 0
    for x in xs:
        if not (0.0 < x < 1.0):
            continue
        st = _farey_advance(*_to_rational(float(x), rng, bits), n)
        if st is None or st[0] == 0:
            continue
        p, q = st
        total = 0.0
        ok = True
        for _ in range(k):
            if p == 0 or p == q:
                ok = False
                break
            total += f_of_log(_farey_log_inv(p, q))
            p, q = _farey_step(p, q)
        if not ok:
            continue
        acc += np.exp(1j * thetas * (total / k))
        used += 1
    return acc, used


def _birkhoff_chunk_float(size, seq, m, F, sampler, n, k, thetas):
    rng = np.random.default_rng(seq)
    x = m.iterate(sampler(rng, size), n)
    total = np.zeros_like(x)
    for _ in range(k):
        total += F(x)
        x = m(x)
    avg = total / k
    return np.exp(1j * np.outer(avg, thetas)).sum(axis=0), len(x)


@dataclass
class CharFunctionTable:
    theta: np.ndarray
    phi_hat: np.ndarray
    target: np.ndarray
    k: int
    n: int
    sample_count: int

    @property
    def sup_error(self) -> float:
        return float(np.max(np.abs(self.phi_hat - self.target)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("theta,re_phi,im_phi,re_target,im_target\n")
        for t, p, z in zip(self.theta, self.phi_hat, self.target):
            buf.write(f"{t:.17g},{p.real:.17g},{p.imag:.17g},{z.real:.17g},{z.imag:.17g}\n")
        return buf.getvalue()


def characteristic_target(m: MapModel, F: GlobalObservable, thetas, depth: float = 200.0,
                          tol: float = 0.02) -> np.ndarray:
    """``Av(e^{i theta F})`` for each theta, via finite-volume estimates."""
    out = np.empty(len(thetas), dtype=complex)
    for i, th in enumerate(thetas):
        G = GlobalObservable(lambda x, th=th: np.exp(1j * th * F(x)), 1.0,
                             breakpoints=F.breakpoints, max_depth=F.max_depth)
        est = estimate_av(m, G, depth=depth, tol=tol)
        if not est.converged:
            raise LimitError(f"Av(exp(i theta F)) did not converge at theta={th:g}")
        out[i] = est.extrapolated
    return out


def birkhoff_distribution(m: MapModel, F: GlobalObservable, k_schedule, n: int,
                          g: Union[GridDensity, Callable], N: int, thetas, seed: int, *,
                          target: Optional[np.ndarray] = None, bits: int = 2048,
                          workers: Optional[int] = None,
                          f_of_log: Optional[Callable] = None) -> CharFunctionTable:
    """Empirical characteristic function of ``(1/k) sum_{i<k} F(T^{n+i} x)``.

    ``x ~ mu_g``. For the Farey map ``f_of_log`` must give ``F`` as a
    function of ``ln(1/x)`` so exact orbits can be evaluated without
    underflow (``np.sin`` for ``F = sin o Phi``).
    """
    if F.d_mu_uniformly_continuous is False:
        raise LimitError("F must be d_mu-uniformly continuous")
    thetas = np.asarray(thetas, dtype=float)
    k = k_for(k_schedule, n)
    sampler = g if callable(g) and not isinstance(g, GridDensity) else InverseCDFSampler(g)
    if target is None:
        target = characteristic_target(m, F, thetas)
    if is_farey(m):
        if f_of_log is None:
            raise LimitError("Farey orbits need F as a function of ln(1/x)")
        parts = run_chunks(_birkhoff_chunk_farey, N, seed, workers=workers,
                           args=(sampler, n, k, thetas, bits, f_of_log))
    else:
        parts = run_chunks(_birkhoff_chunk_float, N, seed, workers=workers,
                           args=(m, F, sampler, n, k, thetas))
    acc = sum(a for a, _ in parts)
    used = sum(u for _, u in parts)
    if used == 0:
        raise LimitError("every orbit was lost")
    return CharFunctionTable(thetas, acc / used, np.asarray(target, dtype=complex), k, n, used)
