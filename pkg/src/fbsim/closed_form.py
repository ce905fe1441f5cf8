"""Closed-form probabilities for the lossless chain.

``p_triple`` and friends are the classical path sums: each reflect/transmit
history contributes its own probability. ``coherent_outcomes`` is the
amplitude-level counterpart that accounts for interference between arm
returns sharing a time bin; it is what ``chain.simulate`` produces for the
default (coherent) configuration.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

from .chain import Absent, Absorbing, ObjectModel, OutcomeDistribution, Phase, Reflective


@dataclass(frozen=True)
class ProbabilityTriple:
    p0: float  # back to the source
    p1: float  # any detector
    p2: float  # reaches the object

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p0, self.p1, self.p2)


@dataclass(frozen=True)
class ImagingStats:
    epsilon: float
    p2_cumulative: float
    m: int


def _check_t(t: float) -> None:
    if not (0.0 < t <= 1.0):
        raise ValueError(f"transmissivity must lie in (0, 1], got {t}")


def _check_n(n: int, name: str = "n") -> None:
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ValueError(f"{name} must be a positive integer, got {n!r}")


def p_triple(transmissivities: Sequence[float]) -> ProbabilityTriple:
    """(p0, p1, p2) with a non-reflective object blocking the path to Mirror X."""
    ts = list(transmissivities)
    if not ts:
        raise ValueError("need at least one transmissivity")
    for t in ts:
        _check_t(t)
    # 1 - p2 telescopes to sum(r_j * P_{j-1}), so p1 is a sum of
    # non-negative terms; 1 - p0 - p2 loses the last ulp near 2/3.
    p0_terms, p1_terms = [], []
    prefix = 1.0
    for t in ts:
        a = (1.0 - t) * prefix
        p0_terms.append(a * a)
        p1_terms.append(a * (1.0 - a))
        prefix *= t
    return ProbabilityTriple(math.fsum(p0_terms), math.fsum(p1_terms), prefix)


def p_triple_equal_t(t: float, n: int) -> ProbabilityTriple:
    _check_t(t)
    _check_n(n)
    return p_triple([t] * n)


def p0_geometric(t: float, n: int) -> float:
    """Summed form (1-t)^2 (1-t^2n) / (1-t^2) of the equal-t source probability."""
    _check_t(t)
    _check_n(n)
    if t == 1.0:
        return 0.0
    return (1.0 - t) ** 2 * (1.0 - t ** (2 * n)) / (1.0 - t * t)


def p_triple_reflective(transmissivities: Sequence[float]) -> ProbabilityTriple:
    base = p_triple(transmissivities)
    p0 = base.p0 + base.p2**2
    return ProbabilityTriple(p0, 1.0 - p0, 0.0)


def p1_limit(t: float) -> float:
    """Detector probability as the number of stages goes to infinity."""
    _check_t(t)
    return 2.0 / (1.0 + 1.0 / t)


def imaging_stats(t: float, n: int | None, m: int, asymptotic: bool = False) -> ImagingStats:
    """False-negative rate and at-least-one-absorption probability for m photons.

    With ``asymptotic`` the detector probability is the infinite-chain limit
    and the absorption probability is zero; otherwise ``n`` stages are used.
    """
    _check_t(t)
    _check_n(m, "m")
    if asymptotic:
        p1, p2 = p1_limit(t), 0.0
    else:
        if n is None:
            raise ValueError("n is required unless asymptotic=True")
        tri = p_triple_equal_t(t, n)
        p1, p2 = tri.p1, tri.p2
    epsilon = (1.0 - p1) ** m
    cumulative = -math.expm1(m * math.log1p(-p2)) if p2 < 1.0 else 1.0
    return ImagingStats(epsilon=epsilon, p2_cumulative=cumulative, m=m)


def coherent_outcomes(transmissivities: Sequence[float], obj: ObjectModel = Absent()) -> OutcomeDistribution:
    """Interference-aware outcome probabilities for a lossless chain.

    With end reflection amplitude c (1 for Mirror X, 0 for an absorber,
    tau*exp(2i*phi) for a phase object), the chain-to-the-right of BS_k
    reflects rho_k = r_k + t_k*rho_{k+1}. An early reflection from a
    displaced reflector lands in its own time bin and only ever transmits
    leftward or drops into a detector.
    """
    ts = list(transmissivities)
    if not ts:
        raise ValueError("need at least one transmissivity")
    for t in ts:
        _check_t(t)
    n = len(ts)
    p2 = math.prod(ts)

    early = 0.0
    p_object = 0.0
    if isinstance(obj, Absorbing):
        c = 0j
        p_object = p2
    elif isinstance(obj, Reflective):
        c = 0j if obj.offset_bins > 0 else 1 + 0j
        early = 1.0 if obj.offset_bins > 0 else 0.0
    elif isinstance(obj, Phase):
        c = obj.tau * cmath.exp(2j * obj.phi)
        p_object = p2 * (1.0 - obj.tau) + p2 * obj.tau * (1.0 - obj.tau)
    else:
        c = 1 + 0j

    rho = [0j] * (n + 2)
    rho[n + 1] = c
    esc = [0.0] * (n + 2)
    esc[n + 1] = early
    for k in range(n, 0, -1):
        t = ts[k - 1]
        rho[k] = (1.0 - t) + t * rho[k + 1]
        esc[k] = t * esc[k + 1]

    det = []
    reach = 1.0  # probability of arriving at BS_k from the left
    for k in range(1, n + 1):
        t = ts[k - 1]
        main = (1.0 - t) * t * abs(1.0 - rho[k + 1]) ** 2
        side = (1.0 - t) * t * esc[k + 1] ** 2
        det.append(reach * (main + side))
        reach *= t
    p_source = abs(rho[1]) ** 2 + esc[1] ** 2
    return OutcomeDistribution(tuple(det), p_source, p_object, 0.0)
