"""Folded-optics layout of the stationary apparatus and an independent tracer.

Frame: the BS Unit lies in the z = 0 plane, the source beam runs along +x
at y = 0 and the beam splitter is the plane x = y (reflecting +x into +y).
Each round through mirrors B, C, D, A brings the beam back to the BS one
spacing s_b lower in y. The reflected branches travel along +y into the
Delay Unit, whose plane contains the y axis and is tilted by theta about
it; there every branch circulates A' -> B' -> C' -> D' -> A' until it
leaves toward Mirror Y after its last A' hit.

``build_canonical_layout`` places the mirrors; ``trace_layout`` knows
nothing about that construction and re-derives every length by
nearest-hit ray tracing over all apertures.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull
from shapely.geometry import Point, Polygon

EPS = 1e-12


class LayoutError(ValueError):
    pass


class CapacityError(LayoutError):
    def __init__(self, mirror: str, message: str):
        super().__init__(f"mirror {mirror}: {message}")
        self.mirror = mirror


class TraceIncompleteError(RuntimeError):
    def __init__(self, message: str, last_hit=None, partial=None):
        super().__init__(message)
        self.last_hit = last_hit
        self.partial = partial  # (points, mirror names) traced before the escape


@dataclass(frozen=True)
class Spacings:
    s_b: float
    s_d: float
    s_v: float

    def __post_init__(self):
        for name in ("s_b", "s_d", "s_v"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise LayoutError(f"{name} must be a positive finite number, got {v}")
        lhs, rhs = self.s_b**2, self.s_d**2 + self.s_v**2
        if abs(lhs - rhs) > 1e-9 * lhs:
            raise LayoutError(f"spacings violate s_b^2 = s_d^2 + s_v^2 ({lhs} != {rhs})")

    @property
    def theta(self) -> float:
        return math.asin(self.s_v / self.s_b)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < EPS:
        raise LayoutError("zero-length vector")
    return v / n


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    u = _unit(np.cross(helper, normal))
    return u, np.cross(normal, u)


@dataclass
class PlanarMirror:
    name: str
    anchor: np.ndarray
    normal: np.ndarray
    aperture: np.ndarray  # (k, 3) vertices of a convex polygon in the plane
    transmissive: bool = False

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)
        self.aperture = np.asarray(self.aperture, dtype=float)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise LayoutError(f"mirror {self.name}: normal is not unit length")
        off = np.abs((self.aperture - self.anchor) @ self.normal)
        if off.size and off.max() > 1e-9 * max(1.0, np.abs(self.aperture).max()):
            raise LayoutError(f"mirror {self.name}: aperture vertices leave the mirror plane")
        u, v = _plane_basis(self.normal)
        rel = self.aperture - self.anchor
        self._polygon = Polygon(np.c_[rel @ u, rel @ v]).convex_hull
        self._basis = (u, v)

    def local(self, point) -> tuple[float, float]:
        rel = np.asarray(point, dtype=float) - self.anchor
        u, v = self._basis
        return float(rel @ u), float(rel @ v)

    def edge_distance(self, point) -> float:
        """Signed distance from the aperture edge: positive inside."""
        p = Point(self.local(point))
        d = self._polygon.exterior.distance(p)
        return d if self._polygon.contains(p) else -d

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.tolist(),
            "normal": self.normal.tolist(),
            "aperture": self.aperture.tolist(),
            "transmissive": self.transmissive,
        }

    @classmethod
    def from_dict(cls, name: str, d: dict) -> PlanarMirror:
        return cls(name, d["anchor"], d["normal"], d["aperture"], bool(d.get("transmissive", False)))


def reflect_ray(origin, direction, mirror: PlanarMirror):
    """Specular bounce off ``mirror``; ``None`` on a miss.

    A miss is a ray parallel to the plane, an intersection behind the
    origin, or one outside the aperture polygon.
    """
    hit = intersect(origin, direction, mirror)
    if hit is None:
        return None
    d = np.asarray(direction, dtype=float)
    n = mirror.normal
    return hit[1], d - 2.0 * (d @ n) * n


def intersect(origin, direction, mirror: PlanarMirror, min_t: float = 1e-9):
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    denom = d @ mirror.normal
    if abs(denom) < EPS:
        return None
    t = ((mirror.anchor - o) @ mirror.normal) / denom
    if t <= min_t:
        return None
    p = o + t * d
    if mirror.edge_distance(p) < 0:
        return None
    return t, p


@dataclass
class Layout:
    spacings: Spacings
    n_rounds: int
    mirrors: dict[str, PlanarMirror]
    source_origin: np.ndarray
    source_direction: np.ndarray
    tilt_theta: float
    bs_extra_length: float = 0.0
    bs_unit: tuple[str, ...] = ("BS", "A", "B", "C", "D")
    delay_unit: tuple[str, ...] = ("A'", "B'", "C'", "D'")
    meta: dict = field(default_factory=dict)

    @property
    def mirror_x(self) -> PlanarMirror:
        return self.mirrors["X"]

    @property
    def mirror_y(self) -> PlanarMirror:
        return self.mirrors["Y"]

    def to_dict(self) -> dict:
        return {
            "spacings": {"s_b": self.spacings.s_b, "s_d": self.spacings.s_d, "s_v": self.spacings.s_v},
            "n_rounds": self.n_rounds,
            "tilt_theta": self.tilt_theta,
            "bs_extra_length": self.bs_extra_length,
            "source": {"origin": self.source_origin.tolist(), "direction": self.source_direction.tolist()},
            "bs_unit": list(self.bs_unit),
            "delay_unit": list(self.delay_unit),
            "mirrors": {name: m.to_dict() for name, m in self.mirrors.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Layout:
        sp = d["spacings"]
        return cls(
            spacings=Spacings(sp["s_b"], sp["s_d"], sp["s_v"]),
            n_rounds=int(d["n_rounds"]),
            mirrors={k: PlanarMirror.from_dict(k, v) for k, v in d["mirrors"].items()},
            source_origin=np.asarray(d["source"]["origin"], dtype=float),
            source_direction=_unit(d["source"]["direction"]),
            tilt_theta=float(d["tilt_theta"]),
            bs_extra_length=float(d.get("bs_extra_length", 0.0)),
            bs_unit=tuple(d.get("bs_unit", ("BS", "A", "B", "C", "D"))),
            delay_unit=tuple(d.get("delay_unit", ("A'", "B'", "C'", "D'"))),
            meta=dict(d.get("meta", {})),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def rotated(self, name: str, angle: float, axis=(0.0, 0.0, 1.0)) -> Layout:
        """Copy with one mirror rotated by ``angle`` about ``axis`` through its anchor."""
        m = self.mirrors[name]
        rot = _rotation(_unit(axis), angle)
        new = PlanarMirror(
            m.name,
            m.anchor,
            _unit(rot @ m.normal),
            (m.aperture - m.anchor) @ rot.T + m.anchor,
            m.transmissive,
        )
        return replace(self, mirrors={**self.mirrors, name: new})


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


# ---------------------------------------------------------------------------
# construction


def capacity(layout_scale: float, spacings: Spacings, aperture_width: float, edge_margin: float = 0.0) -> int:
    """How many parallel rounds fit across an aperture of the given width."""
    if not aperture_width > spacings.s_b:
        raise LayoutError("aperture_width must exceed s_b")
    if edge_margin < 0:
        raise LayoutError("edge_margin must be non-negative")
    usable = max(0.0, aperture_width - 2.0 * edge_margin)
    return int(math.floor(usable / spacings.s_b + 1e-12)) + 1


def _aperture(name, points, normal, anchor, margin, clip=None) -> PlanarMirror:
    """Smallest rectangle holding ``points`` with ``margin`` to spare.

    ``clip`` is an optional (point, inward normal) half-space; the polygon
    is cut by that plane's trace, which is how D' gets its straight edge.
    """
    u, v = _plane_basis(normal)
    rel = np.asarray(points, dtype=float) - anchor
    pts2 = np.c_[rel @ u, rel @ v]
    square = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float) * margin
    cloud = (pts2[:, None, :] + square[None, :, :]).reshape(-1, 2)
    hull = ConvexHull(cloud)
    poly = Polygon(cloud[hull.vertices])
    if clip is not None:
        cpoint, cnormal = clip
        # the clip plane meets the mirror plane in a line; keep its inward side
        big = 1e3 * (1.0 + np.abs(cloud).max())
        g = np.array([cnormal @ u, cnormal @ v])
        g0 = (cpoint - anchor) @ cnormal
        gn = np.linalg.norm(g)
        if gn < EPS:
            raise LayoutError(f"mirror {name}: clip plane parallel to the mirror")
        g, g0 = g / gn, g0 / gn
        tang = np.array([-g[1], g[0]])
        base = g * g0
        half = Polygon([base + big * tang, base - big * tang, base - big * tang + big * g, base + big * tang + big * g])
        poly = poly.intersection(half)
        if poly.is_empty:
            raise CapacityError(name, "clearance edge removes the whole aperture")
    xy = np.asarray(poly.exterior.coords)[:-1]
    verts = anchor + xy[:, :1] * u + xy[:, 1:] * v
    return PlanarMirror(name, anchor, normal, verts)


def build_canonical_layout(
    spacings: Spacings,
    n_rounds: int,
    base_scale: float = 1.0,
    *,
    aperture_width: float | None = None,
    edge_margin: float | None = None,
    bs_extra_length: float = 0.0,
    clearance: float | None = None,
) -> Layout:
    """Place every mirror for an N-round apparatus.

    ``base_scale`` multiplies the overall size S (in units of s_b); the
    loop must be larger than the stack of rounds, otherwise a
    ``CapacityError`` names the mirror that runs out of room.
    """
    if not isinstance(n_rounds, int) or n_rounds < 1:
        raise LayoutError("n_rounds must be a positive integer")
    if not base_scale > 0:
        raise LayoutError("base_scale must be positive")
    n = n_rounds
    sb, sd, sv = spacings.s_b, spacings.s_d, spacings.s_v
    theta = spacings.theta
    margin = sb / 20 if edge_margin is None else edge_margin
    clearance = sv / 10 if clearance is None else clearance

    if aperture_width is not None:
        cap = capacity(base_scale, spacings, aperture_width, margin)
        if aperture_width - 2 * margin <= 0 or cap < n:
            raise CapacityError("A", f"aperture width {aperture_width} holds {cap} rounds, {n} requested")
    if margin >= sb / 2:
        raise CapacityError("B", f"edge margin {margin} leaves no room between paths spaced {sb}")

    S = base_scale * sb * (4 * n + 8)
    if S <= 2 * (n - 1) * sb + sb:
        raise CapacityError("C", f"scale {S} too small for {n} rounds at spacing {sb}")

    ex, ey, ez = np.eye(3)
    ys = [-(k * sb) for k in range(n)]  # BS heights, round k+1 at ys[k]
    x_pts = [np.array([y, y, 0.0]) for y in ys]

    # BS Unit: 45 deg mirrors B: x+y=S, C: x-y=2S, D: x+y=-2S, A: x-y=-S+s_b
    n_B = _unit([-1, -1, 0])
    n_C = _unit([-1, 1, 0])
    n_D = _unit([1, 1, 0])
    n_A = _unit([1, -1, 0])
    b_pts = [np.array([S - y, y, 0.0]) for y in ys[:-1]]
    c_pts = [np.array([S - y, -S - y, 0.0]) for y in ys[:-1]]
    d_pts = [np.array([-S + y, -S - y, 0.0]) for y in ys[:-1]]
    a_pts = [np.array([-S + y, y - sb, 0.0]) for y in ys[:-1]]
    # BS-Unit mirrors are tall and run almost half a spacing past the
    # outermost hits; their only critical edges sit one spacing from a hit
    h = 2 * sb
    flat_margin = max(margin, 0.45 * sb)

    def flat(name, pts, normal, transmissive=False):
        pts = np.asarray(pts)
        cloud = np.vstack([pts + h * ez, pts - h * ez])
        anchor = pts.mean(axis=0)
        m = _aperture(name, cloud, normal, anchor, flat_margin)
        m.transmissive = transmissive
        return m

    mirrors: dict[str, PlanarMirror] = {}
    mirrors["BS"] = flat("BS", x_pts, _unit([-1, 1, 0]), transmissive=True)
    if n > 1:
        mirrors["B"] = flat("B", b_pts, n_B)
        mirrors["C"] = flat("C", c_pts, n_C)
        mirrors["D"] = flat("D", d_pts, n_D)
        mirrors["A"] = flat("A", a_pts, n_A)
    round_len = 6 * S - 2 * sb + bs_extra_length

    # Delay Unit frame: y' = y, x' tilted down by theta about the y axis
    xp = np.array([math.cos(theta), 0.0, -math.sin(theta)])
    yp = ey
    E = 2 * S  # BS -> A' distance, equal for every branch
    a1 = x_pts[0] + E * yp
    # A' contains the BS-point direction (1, 1, 0) so every branch travels E
    nAp = _unit(xp - math.cos(theta) * yp)
    d1 = yp - 2 * (yp @ nAp) * nAp
    d1_2 = np.array([d1 @ xp, d1 @ yp])
    rot = np.array([-d1_2[1], d1_2[0]])
    step = np.array([-sd, -sb])  # in-plane offset between consecutive A' hits
    l4 = S
    w = step - l4 * np.array([0.0, 1.0])
    d2_2 = rot if w @ rot > 0 else -rot
    l2 = float(w @ d2_2)
    diff = float(w @ d1_2)  # l1 - l3
    rest = round_len - l2 - l4
    l1, l3 = (rest + diff) / 2, (rest - diff) / 2
    if min(l1, l3) <= 2 * sb:
        raise CapacityError("B'", "delay loop cannot reach the BS-Unit round length")
    d2 = d2_2[0] * xp + d2_2[1] * yp
    d3 = -d1

    # planes fixed by the first circle of branch 1; later hits slide along them
    b0 = a1 + l1 * d1
    c0 = b0 + l2 * d2
    d0 = c0 + l3 * d3
    nBp = _unit(d2 - d1)
    nCp = _unit(d3 - d2)
    nDp = _unit(yp - d3)
    planes = [(b0, nBp, d2), (c0, nCp, d3), (d0, nDp, yp), (a1, nAp, d1)]

    def to_plane(p, d, anchor, normal):
        return p + ((anchor - p) @ normal) / (d @ normal) * d

    hits = {"A'": [], "B'": [], "C'": [], "D'": []}
    last_a = []
    for k in range(n):
        a = to_plane(x_pts[k], yp, a1, nAp)
        hits["A'"].append(a)
        for _ in range(k, n - 1):
            p, d = a, d1
            for (anchor, normal, out), name in zip(planes, ("B'", "C'", "D'", "A'")):
                p = to_plane(p, d, anchor, normal)
                hits[name].append(p)
                d = out
            a = p
        last_a.append(a)
    if n > 1:
        mirrors["A'"] = _aperture("A'", hits["A'"], nAp, a1, margin)
        mirrors["B'"] = _aperture("B'", hits["B'"], nBp, hits["B'"][0], margin)
        mirrors["C'"] = _aperture("C'", hits["C'"], nCp, hits["C'"][0], margin)
        # straight edge parallel to the xy plane, just above the BS-Unit beams
        mirrors["D'"] = _aperture(
            "D'", hits["D'"], nDp, hits["D'"][0], margin, clip=(np.array([0.0, 0.0, clearance]), ez)
        )
    else:
        mirrors["A'"] = _aperture("A'", hits["A'"], nAp, a1, margin)

    # rendezvous: x_N -> X equals x_N -> A' -> Y
    gap_y = 1.5 * l1
    dist_x = E + gap_y
    x_hit = x_pts[-1] + dist_x * ex
    mirrors["X"] = _aperture("X", [x_hit], -ex, x_hit, max(margin, sb / 4))
    y_hits = [a + gap_y * d1 for a in last_a]
    mirrors["Y"] = _aperture("Y", y_hits, -d1, y_hits[0], max(margin, sb / 4))

    return Layout(
        spacings=spacings,
        n_rounds=n,
        mirrors=mirrors,
        source_origin=np.array([-1.5 * S, 0.0, 0.0]),
        source_direction=ex.copy(),
        tilt_theta=theta,
        bs_extra_length=bs_extra_length,
        meta={"scale": S, "circle_legs": [l1, l2, l3, l4], "entry_length": E, "margin": margin, "clearance": clearance},
    )


# ---------------------------------------------------------------------------
# tracing


@dataclass
class TraceReport:
    round_polylines: list[list[list[float]]]
    round_lengths: list[float]
    delay_lengths: list[float]
    arm_lengths: list[float]
    object_lengths: list[float]
    circle_length: float
    theta_deg: float
    residuals: dict[str, float]
    tolerance: float
    parallel_ok: bool
    lengths_ok: bool
    delay_match_ok: bool
    clearance_ok: bool
    notes: list[str] = field(default_factory=list)
    complete: bool = True
    last_hit: tuple | None = None

    @property
    def all_ok(self) -> bool:
        return self.complete and self.parallel_ok and self.lengths_ok and self.delay_match_ok and self.clearance_ok

    def to_dict(self) -> dict:
        return {
            "round_polylines": self.round_polylines,
            "round_lengths": self.round_lengths,
            "delay_lengths": self.delay_lengths,
            "arm_lengths": self.arm_lengths,
            "object_lengths": self.object_lengths,
            "circle_length": self.circle_length,
            "theta_deg": self.theta_deg,
            "residuals": self.residuals,
            "tolerance": self.tolerance,
            "parallel_ok": self.parallel_ok,
            "lengths_ok": self.lengths_ok,
            "delay_match_ok": self.delay_match_ok,
            "clearance_ok": self.clearance_ok,
            "all_ok": self.all_ok,
            "notes": self.notes,
            "complete": self.complete,
            "last_hit": list(self.last_hit) if self.last_hit else None,
        }


def _nearest(origin, direction, mirrors: dict[str, PlanarMirror]):
    best = None
    for name, m in mirrors.items():
        hit = intersect(origin, direction, m)
        if hit is not None and (best is None or hit[0] < best[1]):
            best = (name, hit[0], hit[1])
    return best


def _follow(origin, direction, mirrors, stop, max_hits, on_split=None):
    """Trace until a mirror in ``stop``; BS hits transmit and call ``on_split``."""
    pts = [np.asarray(origin, dtype=float)]
    names = []
    o, d = pts[0], np.asarray(direction, dtype=float)
    for _ in range(max_hits):
        hit = _nearest(o, d, mirrors)
        if hit is None:
            raise TraceIncompleteError(
                f"ray escaped after {names[-1] if names else 'start'}",
                last_hit=(names[-1] if names else None, pts[-1].tolist()),
                partial=(pts, names),
            )
        name, _, p = hit
        names.append(name)
        pts.append(p)
        m = mirrors[name]
        if m.transmissive:
            if on_split is not None:
                on_split(p, d - 2.0 * (d @ m.normal) * m.normal)
        else:
            d = d - 2.0 * (d @ m.normal) * m.normal
        o = p
        if name in stop:
            return pts, names, d
    raise TraceIncompleteError(
        "hit budget exhausted", last_hit=(names[-1], pts[-1].tolist()), partial=(pts, names)
    )


def _length(pts) -> float:
    return float(sum(np.linalg.norm(b - a) for a, b in zip(pts[:-1], pts[1:])))


def _angle(u, v) -> float:
    u, v = _unit(u), _unit(v)
    return float(math.atan2(np.linalg.norm(np.cross(u, v)), u @ v))


def trace_layout(layout: Layout, tolerance: float = 1e-9, strict: bool = True) -> TraceReport:
    """Trace ``layout`` and check it.

    If the main beam escapes before reaching Mirror X, ``strict`` raises
    ``TraceIncompleteError``; otherwise a report with ``complete=False`` is
    returned whose parallelism residual covers the partial path.
    """
    n = layout.n_rounds
    mirrors = layout.mirrors
    notes: list[str] = []
    splits: list[tuple[np.ndarray, np.ndarray]] = []
    budget = 8 * n + 8

    try:
        pts, names, _ = _follow(
            layout.source_origin,
            layout.source_direction,
            mirrors,
            stop={"X"},
            max_hits=budget,
            on_split=lambda p, d: splits.append((p, d)),
        )
    except TraceIncompleteError as exc:
        if strict:
            raise
        return _incomplete_report(layout, exc, tolerance)
    bs_idx = [i for i, nm in enumerate(names) if nm == "BS"]
    sequence_ok = names[0] == "BS" and names[-1] == "X" and len(bs_idx) == n
    if len(bs_idx) != n:
        notes.append(f"beam met the BS {len(bs_idx)} times, expected {n}")
        if not bs_idx:
            raise TraceIncompleteError("beam never reached the beam splitter")
    pts = pts[1:]  # drop source
    idx = [i for i in bs_idx]
    rounds = [pts[idx[k]: idx[k + 1] + 1] for k in range(len(idx) - 1)]
    round_names = [names[idx[k] + 1: idx[k + 1]] for k in range(len(idx) - 1)]
    for k, rn in enumerate(round_names):
        if rn != ["B", "C", "D", "A"]:
            sequence_ok = False
            notes.append(f"round {k + 1} visited {rn}")
    if names[idx[-1] + 1:] != ["X"]:
        sequence_ok = False
        notes.append(f"exit path visited {names[idx[-1] + 1:]}")
    extra = layout.bs_extra_length
    round_lengths = [_length(r) + extra for r in rounds]
    object_lengths = [sum(round_lengths[k:]) + float(np.linalg.norm(pts[-1] - pts[idx[-1]])) for k in range(len(idx))]

    # parallelism: every segment against the matching segment of round 1,
    # and the closing segment against the source direction
    par = 0.0
    if rounds:
        ref = [b - a for a, b in zip(rounds[0][:-1], rounds[0][1:])]
        for r in rounds:
            segs = [b - a for a, b in zip(r[:-1], r[1:])]
            for s, s0 in zip(segs, ref):
                par = max(par, _angle(s, s0))
            par = max(par, _angle(segs[-1], layout.source_direction))
    exit_dir = pts[-1] - pts[idx[-1]]
    par = max(par, _angle(exit_dir, layout.source_direction))

    # delay unit: every split branch
    delay_lengths, arm_lengths, circle_lengths = [], [], []
    du_par = 0.0
    for k, (p, d) in enumerate(splits):
        try:
            bpts, bnames, _ = _follow(p, d, mirrors, stop={"Y"}, max_hits=5 * n + 8)
        except TraceIncompleteError as exc:
            sequence_ok = False
            notes.append(f"branch {k + 1}: {exc} (last hit {exc.last_hit})")
            delay_lengths.append(float("nan"))
            arm_lengths.append(float("nan"))
            continue
        bpts = [np.asarray(q) for q in bpts]
        a_hits = [i for i, nm in enumerate(bnames) if nm == "A'"]
        expected = ["A'"] + ["B'", "C'", "D'", "A'"] * (n - 1 - k) + ["Y"]
        if bnames != expected:
            sequence_ok = False
            notes.append(f"branch {k + 1} visited {bnames}")
        if a_hits:
            first, last = a_hits[0] + 1, a_hits[-1] + 1
            delay_lengths.append(_length(bpts[first: last + 1]))
            for i0, i1 in zip(a_hits[:-1], a_hits[1:]):
                circle_lengths.append(_length(bpts[i0 + 1: i1 + 2]))
                seg = bpts[i1 + 1] - bpts[i1]
                du_par = max(du_par, _angle(seg, d))
        else:
            delay_lengths.append(float("nan"))
        arm_lengths.append(_length(bpts))
    par = max(par, du_par)

    L = float(np.mean(round_lengths)) if round_lengths else (circle_lengths[0] if circle_lengths else 0.0)
    scale = max(1.0, abs(L))
    len_res = 0.0
    if round_lengths:
        len_res = max(abs(x - L) for x in round_lengths) / scale
    if circle_lengths and round_lengths:
        len_res = max(len_res, max(abs(c - L) for c in circle_lengths) / scale)
    delay_res = 0.0
    for k, dl in enumerate(delay_lengths):
        delay_res = max(delay_res, abs(dl - (n - 1 - k) * L) / scale if math.isfinite(dl) else math.inf)
    if len(arm_lengths) != n:
        delay_res = math.inf
    for k, arm in enumerate(arm_lengths):
        if k < len(object_lengths):
            gap = abs(arm - object_lengths[k]) / scale
            delay_res = max(delay_res, gap if math.isfinite(gap) else math.inf)

    # clearance: the beams that must slip past an aperture edge
    margins = []
    last_bs = pts[idx[-1]]
    for name in ("B", "C"):
        if name in mirrors:
            margins.append(_pass_margin(last_bs, layout.source_direction, mirrors[name]))
    if "A" in mirrors:
        margins.append(_pass_margin(layout.source_origin, layout.source_direction, mirrors["A"]))
    if "D'" in mirrors:
        for p, d in splits:
            margins.append(_pass_margin(p, d, mirrors["D'"]))
    min_margin = min(margins) if margins else math.inf
    clear_res = (0.0 if sequence_ok else math.inf) + max(0.0, -min_margin)

    theta = _measured_tilt(layout)
    res = {
        "parallel": par,
        "lengths": len_res,
        "delay": delay_res,
        "clearance": clear_res,
        "clearance_margin": min_margin,
        "theta": abs(theta - layout.spacings.theta),
    }
    return TraceReport(
        round_polylines=[[q.tolist() for q in r] for r in rounds],
        round_lengths=round_lengths,
        delay_lengths=delay_lengths,
        arm_lengths=arm_lengths,
        object_lengths=object_lengths,
        circle_length=L,
        theta_deg=math.degrees(theta),
        residuals=res,
        tolerance=tolerance,
        parallel_ok=par <= tolerance,
        lengths_ok=len_res <= tolerance,
        delay_match_ok=delay_res <= tolerance,
        clearance_ok=clear_res <= tolerance and min_margin > 0,
        notes=notes,
    )


def _incomplete_report(layout: Layout, exc: TraceIncompleteError, tolerance: float) -> TraceReport:
    pts, names = exc.partial
    # every leg leaving Mirror A must be parallel to the source beam, and
    # legs four mirrors apart repeat the same direction
    segs = [b - a for a, b in zip(pts[:-1], pts[1:])]
    par = 0.0
    for i, nm in enumerate(names):
        if nm == "A" and i + 1 < len(segs):
            par = max(par, _angle(segs[i + 1], layout.source_direction))
    round_starts = [i for i, nm in enumerate(names) if nm == "BS"]
    for a, b in zip(round_starts[:-1], round_starts[1:]):
        for j in range(1, b - a + 1):
            if b + j < len(segs) and a + j < len(segs):
                par = max(par, _angle(segs[b + j], segs[a + j]))
    if len(segs) < 2:
        par = math.inf
    theta = _measured_tilt(layout)
    inf = math.inf
    return TraceReport(
        round_polylines=[],
        round_lengths=[],
        delay_lengths=[],
        arm_lengths=[],
        object_lengths=[],
        circle_length=float("nan"),
        theta_deg=math.degrees(theta),
        residuals={
            "parallel": par,
            "lengths": inf,
            "delay": inf,
            "clearance": inf,
            "clearance_margin": -inf,
            "theta": abs(theta - layout.spacings.theta),
        },
        tolerance=tolerance,
        parallel_ok=par <= tolerance,
        lengths_ok=False,
        delay_match_ok=False,
        clearance_ok=False,
        notes=[f"trace incomplete: {exc}"],
        complete=False,
        last_hit=exc.last_hit,
    )


def _pass_margin(origin, direction, mirror: PlanarMirror) -> float:
    """Distance by which a ray clears ``mirror``'s aperture (inf if it never meets the plane)."""
    d = np.asarray(direction, dtype=float)
    denom = d @ mirror.normal
    if abs(denom) < EPS:
        return math.inf
    t = ((mirror.anchor - np.asarray(origin)) @ mirror.normal) / denom
    if t <= 0:
        return math.inf
    return -mirror.edge_distance(np.asarray(origin) + t * d)


def _measured_tilt(layout: Layout) -> float:
    """Angle between the Delay-Unit plane (spanned by its mirror normals) and xy."""
    normals = [layout.mirrors[nm].normal for nm in layout.delay_unit if nm in layout.mirrors]
    if len(normals) >= 2:
        plane_n = np.cross(normals[0], normals[1])
    else:
        # a single A' still has its normal in the Delay-Unit plane, together with +y
        plane_n = np.cross(normals[0], [0.0, 1.0, 0.0])
    return _angle(plane_n, [0.0, 0.0, 1.0]) if plane_n[2] >= 0 else _angle(-plane_n, [0.0, 0.0, 1.0])
