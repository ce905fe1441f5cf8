"""Command-line front end.

    fbsim probs    --config run.json [--out report.json] [--tolerance 1e-10]
    fbsim sweep    --config run.json --sweep t:0.1:0.9:9 [--out sweep.csv]
    fbsim image    --mask mask.json|mask.pgm --config run.json --out DIR [--seed S] [--photons M]
    fbsim geometry --canonical SB SD SV --n N | --layout layout.json [--out report.json]

Exit codes: 0 success, 2 input error, 3 check or invariant failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from . import closed_form, pgm
from .chain import (
    MAX_ORACLE_STAGES,
    Absent,
    Absorbing,
    ChainConfig,
    ObjectModel,
    Phase,
    Reflective,
    enumerate_paths_oracle,
    simulate,
)
from .geometry import Layout, LayoutError, Spacings, build_canonical_layout, trace_layout
from .imaging import ImagingRun, ObjectMask, image_mask

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 2, 3
DEFAULT_SEGMENT = 4


class InputError(ValueError):
    """Bad user input; maps to exit code 2."""


def load_schema(name: str) -> dict:
    text = resources.files("fbsim").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _validate(doc, schema: str, what: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(schema))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{what}: {where}: {exc.message}") from None


def _num(x: float):
    """15 significant digits; non-finite values become null."""
    x = float(x)
    return float(f"{x:.15g}") if math.isfinite(x) else None


def _clean(obj):
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    chain: ChainConfig
    obj: ObjectModel
    object_spec: dict
    seed: int
    m: int


def parse_object(spec) -> ObjectModel:
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec["type"]
    try:
        if kind == "absent":
            return Absent()
        if kind == "absorbing":
            return Absorbing()
        if kind == "reflective":
            return Reflective(int(spec.get("offset_bins", 1)))
        return Phase(float(spec.get("phi", 0.0)), float(spec.get("tau", 1.0)))
    except ValueError as exc:
        raise InputError(f"object: {exc}") from None


def parse_config(doc: dict) -> RunConfig:
    _validate(doc, "config", "config")
    if "transmissivities" in doc:
        ts = list(doc["transmissivities"])
        n = doc.get("n_stages", len(ts))
    else:
        n = doc.get("n", doc.get("n_stages"))
        if "n" in doc and "n_stages" in doc and doc["n"] != doc["n_stages"]:
            raise InputError("config: n and n_stages disagree")
        ts = [doc["t"]] * n
    if len(ts) != n:
        raise InputError(f"config: n_stages = {n} but {len(ts)} transmissivities given")
    segs = doc.get("segment_lengths", [DEFAULT_SEGMENT] * n)
    losses = doc.get("losses", {})
    arm = losses.get("arm")
    try:
        chain = ChainConfig(
            n,
            tuple(ts),
            tuple(segs),
            bs_loss=losses.get("bs", 0.0),
            mirror_loss=losses.get("mirror", 0.0),
            arm_loss=None if arm in (None, "balanced") else tuple(arm),
            coherent=doc.get("coherent", True),
        )
        if arm == "balanced":
            chain = chain.balanced()
    except ValueError as exc:
        raise InputError(f"config: {exc}") from None
    spec = doc.get("object", "absorbing")
    spec = {"type": spec} if isinstance(spec, str) else dict(spec)
    obj = parse_object(spec)
    if isinstance(obj, Reflective) and obj.offset_bins >= chain.segment_lengths[-1]:
        raise InputError("config: reflective offset_bins must be shorter than the last segment")
    return RunConfig(chain, obj, spec, int(doc.get("seed", 0)), int(doc.get("m", 10)))


def read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{what}: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: {path} is not valid JSON: {exc}") from None


def load_config(path: str | None) -> RunConfig:
    if path is None:
        raise InputError("--config is required")
    return parse_config(read_json(path, "config"))


_PGM_CELLS = {0: Absorbing(), 255: Absent(), 128: Reflective(1)}


def load_mask(path: str) -> ObjectMask:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputError(f"mask: cannot read {path}: {exc.strerror}") from None
    if data[:2] in (b"P2", b"P5"):
        try:
            img, maxval = pgm.decode(data)
        except pgm.PGMError as exc:
            raise InputError(f"mask: {exc}") from None
        if maxval != 255:
            raise InputError("mask: PGM masks must use maxval 255")
        bad = sorted(set(np.unique(img).tolist()) - set(_PGM_CELLS))
        if bad:
            raise InputError(f"mask: PGM values must be 0, 128 or 255; found {bad[:5]}")
        return ObjectMask.from_rows([[_PGM_CELLS[int(v)] for v in row] for row in img])
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise InputError(f"mask: {path} is neither a PGM image nor JSON") from None
    _validate(doc, "mask", "mask")
    rows = [[parse_object(c) for c in row] for row in doc["cells"]]
    if len({len(r) for r in rows}) != 1:
        raise InputError("mask: rows have different lengths")
    mask = ObjectMask.from_rows(rows)
    if doc.get("width", mask.width) != mask.width or doc.get("height", mask.height) != mask.height:
        raise InputError("mask: width/height do not match the cell grid")
    return mask


# -- output ------------------------------------------------------------------


def write_atomic(files: dict[str, bytes]) -> None:
    """Write every file to a temporary sibling first, then rename them all."""
    staged = []
    try:
        for path, payload in files.items():
            d = os.path.dirname(os.path.abspath(path))
            os.makedirs(d, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=d, prefix=".fbsim-", suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic({out: text.encode()})


# -- subcommands -------------------------------------------------------------


def _triple_for(rc: RunConfig):
    ts = rc.chain.transmissivities
    if isinstance(rc.obj, Absorbing):
        return closed_form.p_triple(ts)
    if isinstance(rc.obj, Reflective):
        return closed_form.p_triple_reflective(ts) if rc.obj.offset_bins else closed_form.ProbabilityTriple(1.0, 0.0, 0.0)
    if isinstance(rc.obj, Absent):
        return closed_form.ProbabilityTriple(1.0, 0.0, 0.0)
    if isinstance(rc.obj, Phase) and rc.obj.phi == 0.0 and rc.obj.tau == 1.0:
        return closed_form.ProbabilityTriple(1.0, 0.0, 0.0)
    return None


def probs_report(rc: RunConfig, tolerance: float = 1e-10) -> dict:
    chain = rc.chain
    dist = simulate(chain, rc.obj)
    lossless = chain.bs_loss == 0 and chain.mirror_loss == 0 and not any(chain.arm_loss)
    checks: dict[str, dict] = {}

    gap = abs(dist.total - 1.0)
    checks["normalization"] = {"status": "pass" if gap <= 1e-12 else "fail", "max_abs_diff": gap}

    triple = _triple_for(rc) if lossless else None
    deltas = None
    if triple is not None:
        deltas = {
            "p0": dist.p_source - triple.p0,
            "p1": dist.p_detect - triple.p1,
            "p2": dist.p_object - triple.p2,
        }
        worst = max(abs(v) for v in deltas.values())
        checks["closed_form"] = {"status": "pass" if worst <= tolerance else "fail", "max_abs_diff": worst}
        if worst > tolerance and chain.coherent and not isinstance(rc.obj, (Absent, Phase)):
            checks["closed_form"]["note"] = (
                "the path-sum formulas add history probabilities; the coherent simulator adds "
                "amplitudes of returns sharing a time bin. Set \"coherent\": false for the path-sum limit."
            )
    else:
        checks["closed_form"] = {"status": "skipped", "note": "no closed form for this object/loss setting"}

    if lossless and chain.coherent:
        ref = closed_form.coherent_outcomes(chain.transmissivities, rc.obj)
        worst = dist.max_abs_diff(ref)
        checks["coherent_form"] = {"status": "pass" if worst <= tolerance else "fail", "max_abs_diff": worst}

    if chain.n_stages > MAX_ORACLE_STAGES:
        checks["oracle"] = {
            "status": "refused",
            "note": f"path enumeration is limited to n_stages <= {MAX_ORACLE_STAGES}",
        }
    else:
        worst = dist.max_abs_diff(enumerate_paths_oracle(chain, rc.obj))
        checks["oracle"] = {"status": "pass" if worst <= tolerance else "fail", "max_abs_diff": worst}

    if isinstance(rc.obj, Absent) and lossless:
        ok = dist.p_detect <= 1e-12 and dist.p_source >= 1 - 1e-12
        checks["dark_counts"] = {"status": "pass" if ok else "fail", "max_abs_diff": dist.p_detect}

    cf = None
    if triple is not None:
        cf = {"p0": triple.p0, "p1": triple.p1, "p2": triple.p2}
        if len(set(chain.transmissivities)) == 1:
            cf["p1_limit"] = closed_form.p1_limit(chain.transmissivities[0])
    return {
        "n_stages": chain.n_stages,
        "coherent": chain.coherent,
        "object": rc.object_spec,
        "tolerance": tolerance,
        "closed_form": cf,
        "simulated": dist.to_dict(),
        "deltas": deltas,
        "checks": checks,
        "pass": all(c["status"] != "fail" for c in checks.values()),
    }


def cmd_probs(args) -> int:
    rc = load_config(args.config)
    report = probs_report(rc, args.tolerance if args.tolerance is not None else 1e-10)
    text = dumps(report)
    _validate(json.loads(text), "probs_report", "internal: probs report")
    emit(text, args.out)
    if not report["pass"]:
        failed = [k for k, c in report["checks"].items() if c["status"] == "fail"]
        print(f"fbsim: check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def parse_sweep(spec: str) -> tuple[str, np.ndarray]:
    parts = spec.split(":")
    if len(parts) != 4:
        raise InputError("sweep: expected PARAM:START:END:STEPS")
    param, start, end, steps = parts
    if param not in ("t", "N", "phi"):
        raise InputError(f"sweep: parameter must be t, N or phi, got {param!r}")
    try:
        a, b, k = float(start), float(end), int(steps)
    except ValueError:
        raise InputError("sweep: START/END must be numbers and STEPS an integer") from None
    if k < 1 or not (math.isfinite(a) and math.isfinite(b)):
        raise InputError("sweep: STEPS must be >= 1 and the range finite")
    values = np.linspace(a, b, k) if k > 1 else np.array([a])
    if param == "t" and (values.min() <= 0 or values.max() > 1):
        raise InputError("sweep: t must lie in (0, 1]")
    if param == "N":
        if not (a.is_integer() and b.is_integer()) or a < 1 or b < 1:
            raise InputError("sweep: N bounds must be positive integers")
        if not np.allclose(values, np.round(values)):
            raise InputError("sweep: N steps must land on integers")
        values = np.round(values).astype(int)
    return param, values


def _g(x) -> str:
    return "" if x is None or not math.isfinite(x) else f"{x:.15g}"


def sweep_rows(rc: RunConfig, param: str, values) -> list[tuple]:
    ts = rc.chain.transmissivities
    uniform = len(set(ts)) == 1
    rows = []
    for v in values:
        if param == "phi":
            tau = rc.obj.tau if isinstance(rc.obj, Phase) else 1.0
            d = simulate(rc.chain, Phase(float(v), tau))
            lim = closed_form.p1_limit(ts[0]) if uniform else None
            rows.append((float(v), d.p_source, d.p_detect, d.p_object, lim))
            continue
        if param == "t":
            t, n = float(v), rc.chain.n_stages
        else:
            if not uniform:
                raise InputError("sweep: an N sweep needs a single transmissivity")
            t, n = ts[0], int(v)
        sub = RunConfig(ChainConfig.uniform(t, n, DEFAULT_SEGMENT), rc.obj, rc.object_spec, rc.seed, rc.m)
        tri = _triple_for(sub)
        if tri is None:
            d = simulate(sub.chain, rc.obj)
            tri = closed_form.ProbabilityTriple(d.p_source, d.p_detect, d.p_object)
        rows.append((v if param == "N" else t, tri.p0, tri.p1, tri.p2, closed_form.p1_limit(t)))
    return rows


def cmd_sweep(args) -> int:
    if args.sweep is None:
        raise InputError("--sweep is required")
    rc = load_config(args.config)
    param, values = parse_sweep(args.sweep)
    lines = ["parameter,p0,p1,p2,p1_limit"]
    for p, *vals in sweep_rows(rc, param, values):
        lines.append(",".join([str(p) if param == "N" else _g(p)] + [_g(x) for x in vals]))
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def image_outputs(mask: ObjectMask, rc: RunConfig, threads: int | None = None) -> dict[str, bytes]:
    run = ImagingRun(rc.chain, rc.m, rc.seed)
    res = image_mask(mask, run, threads=threads)
    m = rc.m
    count_max = min(m, 65535)

    def counts_pgm(a):
        a = np.asarray(a, dtype=np.int64)
        if m > 65535:
            a = np.rint(a * (65535 / m)).astype(np.int64)
        return pgm.encode_ascii(a, count_max)

    stats = dict(res.stats)
    blocked = [c for row in mask.cells for c in row if not isinstance(c, Absent)]
    expected = None
    if blocked and len(set(blocked)) == 1:
        p = simulate(rc.chain, blocked[0]).p_detect
        expected = (1.0 - p) ** m
    stats.update(
        width=mask.width,
        height=mask.height,
        n_stages=rc.chain.n_stages,
        false_negative_rate=(stats["false_negatives"] / stats["present_pixels"]) if stats["present_pixels"] else None,
        expected_false_negative_rate=expected,
        seeding="splitmix64 counter stream keyed by seed xor pixel index",
        files={
            "detection": "detection.pgm",
            "clicks": "clicks.pgm",
            "dose": "dose.pgm",
        },
    )
    text = dumps(stats)
    _validate(json.loads(text), "image_stats", "internal: image stats")
    return {
        "detection.pgm": pgm.encode_ascii(res.detection_image.astype(np.int64) * 255, 255),
        "clicks.pgm": counts_pgm(res.click_counts),
        "dose.pgm": counts_pgm(res.dose_map),
        "stats.json": text.encode(),
    }


def cmd_image(args) -> int:
    if args.mask is None:
        raise InputError("--mask is required")
    if args.out is None:
        raise InputError("--out DIR is required for image")
    doc = read_json(args.config, "config") if args.config else {"t": 0.5, "n": 20}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.photons is not None:
        doc["m"] = args.photons
    rc = parse_config(doc)
    mask = load_mask(args.mask)
    files = image_outputs(mask, rc)
    write_atomic({os.path.join(args.out, name): data for name, data in files.items()})
    return EXIT_OK


def cmd_geometry(args) -> int:
    tol = args.tolerance if args.tolerance is not None else 1e-9
    try:
        if args.canonical is not None:
            if args.n is None:
                raise InputError("--canonical needs --n")
            layout = build_canonical_layout(Spacings(*args.canonical), args.n)
        elif args.layout is not None:
            doc = read_json(args.layout, "layout")
            try:
                layout = Layout.from_dict(doc)
            except (KeyError, TypeError) as exc:
                raise InputError(f"layout: missing or malformed field {exc}") from None
        else:
            raise InputError("geometry needs --canonical SB SD SV --n N or --layout PATH")
    except LayoutError as exc:
        raise InputError(f"layout: {exc}") from None
    if args.save_layout:
        write_atomic({args.save_layout: layout.dumps().encode()})
    report = trace_layout(layout, tolerance=tol, strict=False)
    text = dumps(report.to_dict())
    _validate(json.loads(text), "trace_report", "internal: trace report")
    emit(text, args.out)
    if not report.all_ok:
        failed = [k for k in ("parallel_ok", "lengths_ok", "delay_match_ok", "clearance_ok") if not getattr(report, k)]
        print(f"fbsim: geometry check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbsim", description="Chained-interferometer simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probs", help="outcome probabilities with formula and oracle cross-checks")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("sweep", help="CSV sweep over t, N or phi")
    p.add_argument("--config", required=True)
    p.add_argument("--sweep", required=True, metavar="PARAM:START:END:STEPS")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("image", help="Monte Carlo raster scan of an object mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--photons", type=int, metavar="M")
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("geometry", help="trace and check a stationary-apparatus layout")
    p.add_argument("--canonical", nargs=3, type=float, metavar=("SB", "SD", "SV"))
    p.add_argument("--n", type=int)
    p.add_argument("--layout")
    p.add_argument("--save-layout", metavar="PATH")
    p.add_argument("--out")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_geometry)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"fbsim: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
