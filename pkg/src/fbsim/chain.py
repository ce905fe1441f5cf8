"""Single-photon amplitude propagation through the chained interferometer.

The chain is N beam splitters in series. A photon enters BS_1 from the
left (the source side). At every BS_i the reflected part goes up into the
mirror arm Y_i (which carries a quarter-wave plate, passed twice) and the
transmitted part continues to BS_{i+1}; after BS_N it heads for Mirror X,
in front of which the object may sit. Returning packets leave each BS
either to the left (toward the source) or downward into detector D(i).

Lengths are integer time bins. Arm lengths are not free parameters: the
round trip through arm Y_i equals the round trip from BS_i to Mirror X, so
with nothing in front of Mirror X every pair of returning packets meets in
the same bin.
"""
from __future__ import annotations

import cmath
import enum
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Union

MAX_ORACLE_STAGES = 12
BIN_BUDGET_FACTOR = 16  # time-bin budget is this times total path length times N


class NonTerminatingError(RuntimeError):
    """Raised when propagation runs past the time-bin budget."""


class Port(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    ARM = "arm"


# ---------------------------------------------------------------------------
# configuration and object models


@dataclass(frozen=True)
class ChainConfig:
    """Static description of an N-stage chain.

    ``segment_lengths`` holds N entries: the N-1 gaps BS_i -> BS_{i+1}
    followed by the final gap BS_N -> Mirror X. ``arm_loss`` is an extra
    per-arm probability loss applied once per round trip through Y_i; it
    defaults to zero and exists to model (im)balanced arms.

    With ``coherent=False`` packets never interfere: every reflect/transmit
    history contributes its own probability. This is the distinguishable
    path limit, not the physical default.
    """

    n_stages: int
    transmissivities: tuple[float, ...]
    segment_lengths: tuple[int, ...]
    bs_loss: float = 0.0
    mirror_loss: float = 0.0
    arm_loss: tuple[float, ...] | None = None
    coherent: bool = True

    def __post_init__(self):
        n = self.n_stages
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValueError(f"n_stages must be a positive integer, got {n!r}")
        object.__setattr__(self, "transmissivities", tuple(float(t) for t in self.transmissivities))
        object.__setattr__(self, "segment_lengths", tuple(self.segment_lengths))
        if len(self.transmissivities) != n:
            raise ValueError(f"expected {n} transmissivities, got {len(self.transmissivities)}")
        for t in self.transmissivities:
            if not (0.0 < t <= 1.0):
                raise ValueError(f"transmissivity must lie in (0, 1], got {t}")
        if len(self.segment_lengths) != n:
            raise ValueError(f"expected {n} segment lengths, got {len(self.segment_lengths)}")
        for s in self.segment_lengths:
            if not isinstance(s, int) or isinstance(s, bool) or s < 1:
                raise ValueError(f"segment lengths must be integers >= 1, got {s!r}")
        for name in ("bs_loss", "mirror_loss"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.arm_loss is None:
            object.__setattr__(self, "arm_loss", (0.0,) * n)
        else:
            object.__setattr__(self, "arm_loss", tuple(float(a) for a in self.arm_loss))
            if len(self.arm_loss) != n:
                raise ValueError(f"expected {n} arm losses, got {len(self.arm_loss)}")
            for a in self.arm_loss:
                if not (0.0 <= a < 1.0):
                    raise ValueError(f"arm_loss must lie in [0, 1), got {a}")

    @classmethod
    def uniform(cls, t: float, n: int, segment: int = 4, **kwargs) -> ChainConfig:
        return cls(n, (t,) * n, (segment,) * n, **kwargs)

    @property
    def reflectivities(self) -> tuple[float, ...]:
        return tuple(1.0 - t for t in self.transmissivities)

    def distance_to_mirror_x(self, k: int) -> int:
        """Bins from BS_k (1-based) to Mirror X, which is also the arm length."""
        return sum(self.segment_lengths[k - 1:])

    def balanced(self) -> ChainConfig:
        """Copy whose arm losses match the loss of the path beyond each BS.

        Packets returning to BS_k from the right have crossed BS_{k+1..N}
        twice each, so arm Y_k gets the same attenuation and the two
        interfering amplitudes stay equal.
        """
        keep = 1.0 - self.bs_loss
        n = self.n_stages
        arm = tuple(1.0 - keep ** (2 * (n - k)) for k in range(1, n + 1))
        return replace(self, arm_loss=arm)


@dataclass(frozen=True)
class Absent:
    pass


@dataclass(frozen=True)
class Absorbing:
    pass


@dataclass(frozen=True)
class Reflective:
    """Perfect reflector ``offset_bins`` closer to the BS than Mirror X."""

    offset_bins: int = 1

    def __post_init__(self):
        if not isinstance(self.offset_bins, int) or self.offset_bins < 0:
            raise ValueError(f"offset_bins must be a non-negative integer, got {self.offset_bins!r}")


@dataclass(frozen=True)
class Phase:
    """Semitransparent object: amplitude factor sqrt(tau)*exp(i*phi) per pass."""

    phi: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


ObjectModel = Union[Absent, Absorbing, Reflective, Phase]


@dataclass(frozen=True)
class OutcomeDistribution:
    p_detector: tuple[float, ...]
    p_source: float
    p_object: float
    p_loss: float = 0.0

    @property
    def p_detect(self) -> float:
        return math.fsum(self.p_detector)

    @property
    def total(self) -> float:
        return math.fsum((*self.p_detector, self.p_source, self.p_object, self.p_loss))

    def as_vector(self) -> tuple[float, ...]:
        return (*self.p_detector, self.p_source, self.p_object, self.p_loss)

    def max_abs_diff(self, other: OutcomeDistribution) -> float:
        a, b = self.as_vector(), other.as_vector()
        if len(a) != len(b):
            raise ValueError("distributions have different detector counts")
        return max(abs(x - y) for x, y in zip(a, b))

    def to_dict(self) -> dict:
        return {
            "p_detector": list(self.p_detector),
            "p_detect": self.p_detect,
            "p_source": self.p_source,
            "p_object": self.p_object,
            "p_loss": self.p_loss,
        }


# ---------------------------------------------------------------------------
# elementary optics


def bs_transform(amplitude_in: complex, input_port: Port | str, t: float) -> tuple[complex, complex]:
    """Split an amplitude at a beam splitter of transmissivity ``t``.

    Returns ``(straight, reflected)``. Routing depends on the port: light
    from the left goes right / up the arm, light from the right goes left /
    down to the detector, light from the arm goes down to the detector /
    left.
    """
    Port(input_port)  # rejects unknown ports
    if not (0.0 < t <= 1.0):
        raise ValueError(f"transmissivity must lie in (0, 1], got {t}")
    return math.sqrt(t) * amplitude_in, -1j * math.sqrt(1.0 - t) * amplitude_in


def qwp_phase(amplitude_in: complex, passes: int) -> complex:
    if passes < 1:
        raise ValueError("passes must be >= 1")
    return amplitude_in * 1j ** (passes % 4)


# ---------------------------------------------------------------------------
# event-driven propagation


class _Ledger:
    """Terminal accumulators; coherent mode sums amplitudes per (terminal, bin)."""

    def __init__(self, coherent: bool):
        self.coherent = coherent
        self.amps: dict[tuple, complex] = defaultdict(complex)
        self.probs: dict[tuple, float] = defaultdict(float)
        self.loss = 0.0
        self.absorbed = 0.0

    def add(self, key: tuple, value) -> None:
        if self.coherent:
            self.amps[key] += value
        else:
            self.probs[key] += value

    def totals(self) -> dict[tuple, float]:
        if not self.coherent:
            return self.probs
        return {k: abs(a) ** 2 for k, a in self.amps.items()}


def _weight(value, coherent: bool) -> float:
    return abs(value) ** 2 if coherent else value


def _scale(value, factor: complex, coherent: bool):
    return value * factor if coherent else value * abs(factor) ** 2


def _check_object(config: ChainConfig, obj: ObjectModel) -> None:
    if isinstance(obj, Reflective) and obj.offset_bins >= config.segment_lengths[-1]:
        raise ValueError(
            f"reflective offset {obj.offset_bins} must be smaller than the final "
            f"segment length {config.segment_lengths[-1]}"
        )
    if not isinstance(obj, (Absent, Absorbing, Reflective, Phase)):
        raise TypeError(f"unknown object model {obj!r}")


def simulate(config: ChainConfig, obj: ObjectModel = Absent()) -> OutcomeDistribution:
    """Propagate one photon through the chain and return exact outcome probabilities."""
    _check_object(config, obj)
    coherent = config.coherent
    n = config.n_stages
    seg = config.segment_lengths
    eta = math.sqrt(1.0 - config.bs_loss)
    mu = math.sqrt(1.0 - config.mirror_loss)
    arm_keep = [math.sqrt(1.0 - a) for a in config.arm_loss]
    dist = [config.distance_to_mirror_x(k) for k in range(1, n + 1)]
    budget = BIN_BUDGET_FACTOR * sum(seg) * n

    zero = 0j if coherent else 0.0
    pending: dict[int, dict[tuple[int, Port], complex]] = {}
    times: list[int] = []
    ledger = _Ledger(coherent)

    def push(time: int, k: int, port: Port, value) -> None:
        if time not in pending:
            pending[time] = defaultdict(lambda: zero)
            heapq.heappush(times, time)
        pending[time][(k, port)] += value

    def lose(value, keep: float) -> None:
        ledger.loss += _weight(value, coherent) * (1.0 - keep * keep)

    def toward_mirror_x(time: int, value) -> None:
        # value has just left BS_N heading right
        final = seg[-1]
        if isinstance(obj, Absorbing):
            ledger.absorbed += _weight(value, coherent)
            return
        if isinstance(obj, Reflective) and obj.offset_bins > 0:
            lose(value, mu)
            push(time + 2 * (final - obj.offset_bins), n, Port.RIGHT, _scale(value, mu, coherent))
            return
        if isinstance(obj, Phase):
            through = math.sqrt(obj.tau) * cmath.exp(1j * obj.phi)
            ledger.absorbed += _weight(value, coherent) * (1.0 - obj.tau)
            value = _scale(value, through, coherent)
            lose(value, mu)
            value = _scale(value, mu, coherent)
            ledger.absorbed += _weight(value, coherent) * (1.0 - obj.tau)
            value = _scale(value, through, coherent)
        else:
            lose(value, mu)
            value = _scale(value, mu, coherent)
        push(time + 2 * final, n, Port.RIGHT, value)

    push(0, 1, Port.LEFT, 1.0 + 0j if coherent else 1.0)
    while times:
        now = heapq.heappop(times)
        if now > budget:
            raise NonTerminatingError(f"propagation exceeded {budget} time bins")
        inputs = pending.pop(now)
        for k in sorted({key[0] for key in inputs}):
            t = config.transmissivities[k - 1]
            r = 1.0 - t
            straight = math.sqrt(t)
            refl = -1j * math.sqrt(r)

            a_left = inputs.get((k, Port.LEFT), zero)
            if _weight(a_left, coherent):
                lose(a_left, eta)
                out_right = _scale(a_left, straight * eta, coherent)
                out_arm = _scale(a_left, refl * eta, coherent)
                if k < n:
                    push(now + seg[k - 1], k + 1, Port.LEFT, out_right)
                else:
                    toward_mirror_x(now, out_right)
                # two QWP passes, one mirror bounce, optional arm attenuator
                arm_factor = qwp_phase(1.0, 2) * mu * arm_keep[k - 1]
                lose(out_arm, abs(arm_factor))
                push(now + 2 * dist[k - 1], k, Port.ARM, _scale(out_arm, arm_factor, coherent))

            a_right = inputs.get((k, Port.RIGHT), zero)
            a_arm = inputs.get((k, Port.ARM), zero)
            if _weight(a_right, coherent) or _weight(a_arm, coherent):
                lose(a_right, eta)
                lose(a_arm, eta)
                if coherent:
                    out_left = eta * (straight * a_right + refl * a_arm)
                    out_det = eta * (refl * a_right + straight * a_arm)
                else:
                    out_left = eta * eta * (t * a_right + r * a_arm)
                    out_det = eta * eta * (r * a_right + t * a_arm)
                ledger.add(("detector", k, now), out_det)
                if k > 1:
                    push(now + seg[k - 2], k - 1, Port.RIGHT, out_left)
                else:
                    ledger.add(("source", now), out_left)

    return _distribution(n, ledger.totals(), ledger.absorbed, ledger.loss)


def _distribution(n: int, totals: dict[tuple, float], absorbed: float, loss: float) -> OutcomeDistribution:
    det = [[] for _ in range(n)]
    src = []
    for key, p in totals.items():
        if key[0] == "detector":
            det[key[1] - 1].append(p)
        else:
            src.append(p)
    return OutcomeDistribution(
        p_detector=tuple(math.fsum(d) for d in det),
        p_source=math.fsum(src),
        p_object=absorbed,
        p_loss=loss,
    )


# ---------------------------------------------------------------------------
# independent check: explicit history enumeration


@dataclass
class _History:
    amp: complex
    time: int
    steps: list = field(default_factory=list)


def enumerate_paths_oracle(config: ChainConfig, obj: ObjectModel = Absent()) -> OutcomeDistribution:
    """Enumerate every reflect/transmit history and combine them afterwards.

    No amplitudes are merged during the walk. Histories ending in the same
    terminal at the same time bin are summed at the end (or, for
    incoherent configs, their probabilities are).
    """
    n = config.n_stages
    if n > MAX_ORACLE_STAGES:
        raise ValueError(f"oracle refuses n_stages > {MAX_ORACLE_STAGES} (got {n})")
    _check_object(config, obj)
    seg = config.segment_lengths
    ts = config.transmissivities
    eta = math.sqrt(1.0 - config.bs_loss)
    mu = math.sqrt(1.0 - config.mirror_loss)

    ends: list[tuple[tuple, complex]] = []
    absorbed: list[tuple[tuple, complex, float]] = []

    def go_left(k: int, amp: complex, time: int) -> None:
        # amp arrives at BS_k from the right
        t = ts[k - 1]
        ends.append((("detector", k, time), amp * eta * -1j * math.sqrt(1.0 - t)))
        out = amp * eta * math.sqrt(t)
        if k == 1:
            ends.append((("source", time), out))
        else:
            go_left(k - 1, out, time + seg[k - 2])

    def from_arm(k: int, amp: complex, time: int) -> None:
        t = ts[k - 1]
        ends.append((("detector", k, time), amp * eta * math.sqrt(t)))
        out = amp * eta * -1j * math.sqrt(1.0 - t)
        if k == 1:
            ends.append((("source", time), out))
        else:
            go_left(k - 1, out, time + seg[k - 2])

    amp, time = 1.0 + 0j, 0
    for k in range(1, n + 1):
        t = ts[k - 1]
        arm = amp * eta * -1j * math.sqrt(1.0 - t) * (1j * 1j) * mu * math.sqrt(1.0 - config.arm_loss[k - 1])
        from_arm(k, arm, time + 2 * config.distance_to_mirror_x(k))
        amp = amp * eta * math.sqrt(t)
        if k < n:
            time += seg[k - 1]

    final = seg[-1]
    if isinstance(obj, Absorbing):
        absorbed.append((("object", time), amp, 1.0))
    elif isinstance(obj, Reflective) and obj.offset_bins > 0:
        go_left(n, amp * mu, time + 2 * (final - obj.offset_bins))
    elif isinstance(obj, Phase):
        through = math.sqrt(obj.tau) * cmath.exp(1j * obj.phi)
        absorbed.append((("object", time, "out"), amp, 1.0 - obj.tau))
        back = amp * through * mu
        absorbed.append((("object", time, "back"), back, 1.0 - obj.tau))
        go_left(n, back * through, time + 2 * final)
    else:
        go_left(n, amp * mu, time + 2 * final)

    totals: dict[tuple, float] = defaultdict(float)
    if config.coherent:
        grouped: dict[tuple, complex] = defaultdict(complex)
        for key, a in ends:
            grouped[key] += a
        for key, a in grouped.items():
            totals[key] = abs(a) ** 2
    else:
        for key, a in ends:
            totals[key] += abs(a) ** 2
    p_object = math.fsum(abs(a) ** 2 * frac for _, a, frac in absorbed)
    dist = _distribution(n, totals, p_object, 0.0)
    p_loss = max(0.0, 1.0 - math.fsum((*dist.p_detector, dist.p_source, p_object)))
    return replace(dist, p_loss=p_loss)


def detector_probability_vs_phase(
    config: ChainConfig, phi_samples, tau: float = 1.0
) -> list[tuple[float, float]]:
    return [(float(phi), simulate(config, Phase(float(phi), tau)).p_detect) for phi in phi_samples]
