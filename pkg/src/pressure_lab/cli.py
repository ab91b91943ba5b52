"""Command-line front end: configs in, CSV/JSON/SVG out.

A run is described by a JSON config file, command-line flags, or both;
flags win field by field.  Every file-producing command echoes its
resolved configuration into ``<out>.manifest.json`` and stamps the seed
into a comment line of the CSV, so identical configurations reproduce
identical bytes.

Exit codes: 0 success, 2 validation failure, 3 numeric or convergence
failure, 4 expression parse failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .cohomology import transform_pipeline
from .combinatorics import PartialFiniteMap, check_tec, enumerate_partial_maps
from .errors import (
    AlphaRecursionError,
    BasePointError,
    ClassAError,
    DepthError,
    DomainError,
    EvaluationError,
    InconsistentVerdictError,
    InternalInvariantError,
    InvariantError,
    IterationError,
    NoGapError,
    ParseError,
    PoleOnGridError,
    PressureLabError,
    SizeError,
    ToleranceError,
    UndefinedDerivativeError,
    ValidationError,
)
from .expressions import compile_expression, parse_expression, to_source
from .keller import conformal_grid_measure, decay_correlation, var_alpha1
from .map_core import IntervalMap, piecewise_linear_map, polynomial_map
from .plots import decay_figure, pressure_curve_figure
from .potentials import (
    UPotential,
    geometric_potential,
    holder_potential,
    zero_potential,
)
from .pressure import (
    collocation_operator,
    detect_phase_transition,
    hyperbolicity_check,
    leading_spectrum,
    pressure_curve,
    theta_stats,
)
from .registry import named_map

_VALIDATION_ERRORS = (
    ValidationError,
    ClassAError,
    SizeError,
    DomainError,
    DepthError,
    BasePointError,
    PoleOnGridError,
    EvaluationError,
    UndefinedDerivativeError,
)
_NUMERIC_ERRORS = (
    IterationError,
    NoGapError,
    ToleranceError,
    InvariantError,
    InternalInvariantError,
    InconsistentVerdictError,
    AlphaRecursionError,
)

_CONFIG_KEYS = {
    "map",
    "potential",
    "t",
    "depth",
    "grid_size",
    "max_period",
    "window",
    "seed",
    "threads",
    "out",
    "n_max",
    "alpha",
    "observable",
    "max_size",
    "samples",
    "exhaustive",
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved description of one command invocation."""

    command: str
    map_spec: Any
    potential: Any = "geometric"
    t_start: float = -3.0
    t_stop: float = -0.05
    t_count: int = 60
    depth: int = 16
    grid_size: int = 1024
    max_period: int = 10
    window: float = 0.05
    seed: int = 0
    threads: int | None = None
    out: str | None = None
    n_max: int = 20
    alpha: float = 0.5
    observable: str = "x"
    max_size: int = 5
    samples: int = 10000
    exhaustive: bool = False


# ----------------------------------------------------------------------
# config resolution


def _parse_t_spec(spec) -> tuple[float, float, int]:
    if isinstance(spec, Mapping):
        try:
            return float(spec["start"]), float(spec["stop"]), int(spec["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad t grid spec {spec!r}") from exc
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(
                f"t grid must be start:stop:count, got {spec!r}"
            )
        try:
            return float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ValidationError(f"bad t grid {spec!r}") from exc
    raise ValidationError(f"unrecognized t grid spec {spec!r}")


def _load_config_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = _load_config_file(args.config) if args.config else {}

    def pick(key: str, default):
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    map_spec = args.map if args.map is not None else file_cfg.get("map")
    if map_spec is None and args.command != "tec-fuzz":
        raise ValidationError("a map is required (--map or the config file)")
    t_flag = args.t if args.t is not None else file_cfg.get("t")
    if t_flag is None:
        t_start, t_stop, t_count = -3.0, -0.05, 60
    else:
        t_start, t_stop, t_count = _parse_t_spec(t_flag)
    return RunConfig(
        command=args.command,
        map_spec=map_spec,
        potential=pick("potential", "geometric"),
        t_start=t_start,
        t_stop=t_stop,
        t_count=t_count,
        depth=int(pick("depth", 16)),
        grid_size=int(pick("grid_size", 1024)),
        max_period=int(pick("max_period", 10)),
        window=float(pick("window", 0.05)),
        seed=int(pick("seed", 0)),
        threads=pick("threads", None),
        out=pick("out", None),
        n_max=int(pick("n_max", 20)),
        alpha=float(pick("alpha", 0.5)),
        observable=str(pick("observable", "x")),
        max_size=int(pick("max_size", 5)),
        samples=int(pick("samples", 10000)),
        exhaustive=bool(pick("exhaustive", False)),
    )


# ----------------------------------------------------------------------
# model building


def _build_map(spec) -> IntervalMap:
    if isinstance(spec, str):
        return named_map(spec)
    if isinstance(spec, Mapping):
        if "name" in spec:
            return named_map(str(spec["name"]))
        if "polynomial" in spec:
            coeffs = [float(c) for c in spec["polynomial"]]
            domain = spec.get("domain")
            if not domain or len(domain) != 2:
                raise ValidationError("polynomial map needs a [lo, hi] domain")
            return polynomial_map(coeffs, (float(domain[0]), float(domain[1])))
        if "piecewise" in spec:
            pw = spec["piecewise"]
            try:
                breaks = [float(v) for v in pw["breakpoints"]]
                values = [float(v) for v in pw["values"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"bad piecewise spec {pw!r}") from exc
            return piecewise_linear_map(breaks, values)
    raise ValidationError(f"unrecognized map spec {spec!r}")


def _build_potential(spec, m: IntervalMap) -> UPotential:
    if spec is None or spec == "geometric":
        return geometric_potential(m)
    if spec == "zero":
        return zero_potential()
    if isinstance(spec, str) and spec.startswith("holder:"):
        spec = {"holder": spec[len("holder:") :]}
    if isinstance(spec, Mapping):
        if "holder" in spec:
            ast = parse_expression(str(spec["holder"]))
            return holder_potential(compile_expression(ast), name=to_source(ast))
        if "u_class" in spec:
            body = spec["u_class"]
            if not isinstance(body, Mapping):
                raise ValidationError("u_class spec must be an object")
            if "g" in body:
                ast = parse_expression(str(body["g"]))
                regular = compile_expression(ast)
            else:
                regular = zero_potential().regular_fn
            terms = []
            for center, coeff in body.get("b", {}).items():
                coeff = float(coeff)
                if coeff < 0:
                    raise ValidationError(
                        "u-class singular coefficients must be nonnegative"
                    )
                terms.append((float(center), coeff))
            terms.sort()
            return UPotential(regular, tuple(terms), kind="custom", name="u-class")
    raise ValidationError(f"unrecognized potential spec {spec!r}")


# ----------------------------------------------------------------------
# output helpers


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header: list[str], rows, seed: int) -> None:
    lines = [f"# seed={seed}", ",".join(header)]
    lines.extend(",".join(_fmt_cell(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sanitize(obj):
    if isinstance(obj, Mapping):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(float(v)) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_manifest(out_path: str, cfg: RunConfig, extra: dict) -> None:
    payload = {"version": __version__, "config": dataclasses.asdict(cfg)}
    payload.update(extra)
    text = json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n"
    Path(str(out_path) + ".manifest.json").write_text(text, encoding="utf-8")


def _emit_json(cfg: RunConfig, payload: dict) -> None:
    text = json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
        _write_manifest(cfg.out, cfg, {})
        print(f"wrote {cfg.out}")
    else:
        sys.stdout.write(text)


def _svg_path(out: str) -> str:
    stem, _, _ = str(out).rpartition(".")
    return (stem or str(out)) + ".svg"


def _require_out(cfg: RunConfig) -> str:
    if not cfg.out:
        raise ValidationError(f"{cfg.command} requires --out")
    return cfg.out


def _verdict_dict(verdict) -> dict | None:
    if verdict is None:
        return None
    return {
        "has_transition": verdict.has_transition,
        "t_c": verdict.t_c,
        "criterion_satisfied": verdict.criterion_satisfied,
        "theta_star": verdict.theta_star,
        "slope_proxy": verdict.slope_proxy,
        "window": verdict.window,
    }


def _t_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.t_count < 1:
        raise ValidationError("t grid needs at least one point")
    t = np.linspace(cfg.t_start, cfg.t_stop, cfg.t_count)
    if np.any(t >= 0):
        raise ValidationError(
            f"{cfg.command} needs a strictly negative t grid, got "
            f"[{cfg.t_start}, {cfg.t_stop}]"
        )
    return t


def _cohomology_payload(m: IntervalMap, data) -> dict:
    return {
        "sigma_max": [float(s) for s in data.sigma_max],
        "alpha": {f"{c:g}": float(a) for c, a in sorted(data.alpha.items())},
        "b": {f"{c:g}": float(v) for c, v in sorted(data.b_coeffs.items())},
        "lambda_G": [float(v) for v in data.lambda_G],
        "exceptional": bool(data.exceptional),
        "warnings": list(data.warnings),
        "G_constant": _constant_level(m, data.G),
    }


def _constant_level(m: IntervalMap, potential: UPotential) -> float | None:
    a, b = m.domain
    pts = np.linspace(a, b, 257)[1:-1]
    for pole in potential.pole_locations:
        pts = pts[np.abs(pts - pole) > 1e-3]
    if pts.size == 0:
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(potential(pts), dtype=float)
    # correction terms can hit removable log singularities on exact grid
    # coincidences; judge constancy on the finite majority only
    vals = vals[np.isfinite(vals)]
    if vals.size < pts.size // 2:
        return None
    if float(vals.max() - vals.min()) <= 1e-9:
        return float(vals.mean())
    return None


# ----------------------------------------------------------------------
# subcommands


def _cmd_pressure_curve(cfg: RunConfig) -> None:
    out = _require_out(cfg)
    m = _build_map(cfg.map_spec)
    u = _build_potential(cfg.potential, m)
    t = _t_grid(cfg)
    curve = pressure_curve(
        m,
        u,
        t,
        depth=cfg.depth,
        N=cfg.grid_size,
        max_period=cfg.max_period,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    verdict = None
    if cfg.t_count >= 20:
        verdict = detect_phase_transition(curve, window=cfg.window)
        curve = curve.with_transition(verdict)
    rows = [
        (
            float(curve.t_grid[i]),
            float(curve.p_tilde[i]),
            float(curve.atomic[i]),
            float(curve.p[i]),
            float(curve.tree_est_raw[i]),
            float(curve.engine_gap[i]),
        )
        for i in range(len(curve.t_grid))
    ]
    _write_csv(out, ["t", "p_tilde", "atomic", "p", "tree_est_raw", "engine_gap"], rows, cfg.seed)
    svg = _svg_path(out)
    pressure_curve_figure(curve, verdict, svg)
    _write_manifest(
        out,
        cfg,
        {
            "outputs": {"csv": str(out), "svg": svg},
            "theta_max": curve.theta_max,
            "theta_star": curve.theta_star,
            "exceptional": curve.exceptional,
            "transition": _verdict_dict(verdict),
            "warnings": list(curve.warnings),
        },
    )
    print(f"wrote {out}")


def _cmd_cohomology(cfg: RunConfig) -> None:
    m = _build_map(cfg.map_spec)
    u = _build_potential(cfg.potential, m)
    data = transform_pipeline(m, u)
    _emit_json(cfg, _cohomology_payload(m, data))


def _cmd_transition(cfg: RunConfig) -> None:
    m = _build_map(cfg.map_spec)
    u = _build_potential(cfg.potential, m)
    t = _t_grid(cfg)
    curve = pressure_curve(
        m,
        u,
        t,
        depth=cfg.depth,
        N=cfg.grid_size,
        max_period=cfg.max_period,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    verdict = detect_phase_transition(curve, window=cfg.window)
    payload = _verdict_dict(verdict)
    payload.update(
        {
            "theta_max": curve.theta_max,
            "exceptional": curve.exceptional,
            "warnings": list(curve.warnings),
        }
    )
    _emit_json(cfg, payload)


def _cmd_analyze(cfg: RunConfig) -> None:
    m = _build_map(cfg.map_spec)
    u = _build_potential(cfg.potential, m)
    data = transform_pipeline(m, u)
    theta = theta_stats(m, u, max_period=min(cfg.max_period, 14))
    t = _t_grid(cfg)
    curve = pressure_curve(
        m,
        u,
        t,
        data=data,
        depth=cfg.depth,
        N=cfg.grid_size,
        max_period=cfg.max_period,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    verdict = None
    if cfg.t_count >= 20:
        verdict = detect_phase_transition(curve, window=cfg.window)
    hyper = {}
    for tv in (-0.5, -2.0):
        rep = hyperbolicity_check(m, u, tv, data=data, max_period=cfg.max_period)
        hyper[f"{tv:g}"] = {
            "hyperbolic": rep.hyperbolic,
            "sup_avg": rep.sup_avg,
            "pressure": rep.pressure,
        }
    payload = {
        "map": {"name": m.name or m.kind, "domain": list(m.domain)},
        "potential": u.name or u.kind,
        "cohomology": _cohomology_payload(m, data),
        "theta": {
            "theta_max": theta.theta_max,
            "witness": list(theta.witness.points) if theta.witness else None,
            "exact": theta.exact,
        },
        "curve": {
            "t": curve.t_grid,
            "p_tilde": curve.p_tilde,
            "atomic": curve.atomic,
            "p": curve.p,
            "engine_gap": curve.engine_gap,
        },
        "transition": _verdict_dict(verdict),
        "hyperbolicity": hyper,
        "warnings": list(curve.warnings),
    }
    _emit_json(cfg, payload)


def _random_partial_map(rng: np.random.Generator, max_size: int) -> PartialFiniteMap:
    size = int(rng.integers(1, max_size + 1))
    k = int(rng.integers(0, size + 1))
    sub = sorted(int(v) for v in rng.choice(size, size=k, replace=False))
    values = rng.integers(0, size, size=k)
    return PartialFiniteMap(
        big_size=size,
        sub=frozenset(sub),
        pi={s: int(v) for s, v in zip(sub, values)},
    )


def _cmd_tec_fuzz(cfg: RunConfig) -> None:
    counts: dict[int, list[int]] = {}
    if cfg.exhaustive:
        instances = enumerate_partial_maps(cfg.max_size)
    else:
        rng = np.random.default_rng(cfg.seed)
        instances = (_random_partial_map(rng, cfg.max_size) for _ in range(cfg.samples))
    for pm in instances:
        row = counts.setdefault(pm.big_size, [0, 0])
        row[0] += 1
        if not check_tec(pm).holds:
            row[1] += 1
    rows = [(size, counts[size][0], counts[size][1]) for size in sorted(counts)]
    total = sum(r[1] for r in rows)
    violations = sum(r[2] for r in rows)
    if cfg.out:
        _write_csv(cfg.out, ["size", "instances", "violations"], rows, cfg.seed)
        _write_manifest(
            cfg.out,
            cfg,
            {"instances": total, "violations": violations, "mode": "exhaustive" if cfg.exhaustive else "random"},
        )
    print(f"instances checked: {total}, counterexamples: {violations}")
    if violations:
        raise InternalInvariantError(
            f"{violations} counterexamples to the preimage-count inequality"
        )


def _cmd_keller(cfg: RunConfig) -> None:
    out = _require_out(cfg)
    m = _build_map(cfg.map_spec)
    weight = lambda y: np.ones(np.shape(y))
    spectral = leading_spectrum(collocation_operator(m, weight, cfg.grid_size))
    gm = conformal_grid_measure(m, spectral)
    ast = parse_expression(cfg.observable)
    vals = np.asarray(compile_expression(ast)(gm.support), dtype=float)
    norm = var_alpha1(vals, cfg.alpha, gm)
    decay = decay_correlation(m, spectral, vals, vals, cfg.n_max)
    rows = [(n, float(c)) for n, c in enumerate(decay.series, start=1)]
    _write_csv(out, ["n", "c_n"], rows, cfg.seed)
    svg = _svg_path(out)
    decay_figure(decay.series, decay.fitted_rate, svg)
    _write_manifest(
        out,
        cfg,
        {
            "outputs": {"csv": str(out), "svg": svg},
            "observable": to_source(ast),
            "fitted_rate": decay.fitted_rate,
            "gap_ratio": decay.gap_ratio,
            "n_fit": decay.n_fit,
            "leading_eigenvalue": spectral.leading_eigenvalue,
            "norm": {
                "alpha": norm.alpha,
                "A": norm.A,
                "l1_part": norm.l1_part,
                "var_part": norm.var_part,
                "total": norm.total,
            },
        },
    )
    print(f"wrote {out}")


_HANDLERS = {
    "analyze": _cmd_analyze,
    "cohomology": _cmd_cohomology,
    "pressure-curve": _cmd_pressure_curve,
    "transition": _cmd_transition,
    "tec-fuzz": _cmd_tec_fuzz,
    "keller": _cmd_keller,
}


# ----------------------------------------------------------------------
# entry points


def _build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pressure-lab",
        description="pressure curves, potential transforms, and transfer-operator "
        "diagnostics for smooth interval maps",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override fields")
        p.add_argument("--map", help="named map, quadratic:<a>, or use the config file")
        p.add_argument(
            "--potential",
            help="'geometric', 'zero', 'holder:<expr>', or a config-file object",
        )
        p.add_argument("--t", help="t grid as start:stop:count")
        p.add_argument("--depth", type=int, help="preimage tree depth")
        p.add_argument("--grid-size", type=int, dest="grid_size", help="collocation cells")
        p.add_argument("--max-period", type=int, dest="max_period")
        p.add_argument("--window", type=float, help="transition location tolerance")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output file; reports also render an SVG next to it")

    for name in ("analyze", "cohomology", "pressure-curve", "transition"):
        common(sub.add_parser(name))
    tec = sub.add_parser("tec-fuzz")
    common(tec)
    tec.add_argument("--max-size", type=int, dest="max_size")
    tec.add_argument("--samples", type=int)
    tec.add_argument("--exhaustive", action="store_true", default=None)
    kel = sub.add_parser("keller")
    common(kel)
    kel.add_argument("--n-max", type=int, dest="n_max")
    kel.add_argument("--alpha", type=float)
    kel.add_argument("--observable", help="expression in x probed for decay")
    return ap


def run_command(argv=None) -> int:
    parser = _build_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = _resolve_config(args)
        _HANDLERS[cfg.command](cfg)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 4
    except _VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except PressureLabError as exc:
        # anything typed but unmapped counts as a validation problem
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
