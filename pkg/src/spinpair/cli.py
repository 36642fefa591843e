"""Command-line entry point tying the modules into reproducible pipelines.

Subcommands: ``simulate``, ``stats``, ``reconstruct``, ``verify-dist``,
``chsh``, ``fit-density``, ``geodesic``.  Every stochastic subcommand
requires an explicit ``--seed``; configuration may also come from a
JSON file (``--config``), with command-line flags taking precedence
over file values over defaults.  Every ``--report`` JSON embeds the
fully resolved configuration, which suffices to reproduce the run.

All file output is atomic (temp file + rename) and deterministic:
rerunning a config produces byte-identical artifacts, independent of
``--workers``.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .geometry import UnitVec
from .experiment import (
    BACKENDS,
    Mark,
    Post,
    chsh,
    estimate_pair_stats,
    generate_logbook,
    generate_posts,
    logbook_from_csv,
    logbook_to_csv,
)
from .hidden import classical_triples, factorized_triples, tetra_triples, verify_marginals
from .geometry import RandomStream
from .density_fit import CONSTRAINT_NAMES, FitNotConverged, fit_discrete_density
from .reconstruct import (
    HYPOTHESES,
    align_and_score,
    angles_from_stats,
    completed_cosine_matrix,
    embed_on_sphere,
    embeddability_test,
    sampled_noise_tolerance,
)
from .experiment import PairStats
from .geodesic import (
    GeodesicConstants,
    NoNodes,
    classify_orbit,
    conserved_drift,
    integrate,
    node_precession,
    state_from_constants,
    stereogram_svg,
    summary_report,
    tilt,
    trajectory_csv,
)

SAMPLERS = {
    "tetra": tetra_triples,
    "factorized": factorized_triples,
    "classical": classical_triples,
}

_STOCHASTIC = {"simulate", "verify-dist", "chsh"}


def atomic_write(path: str, data: str) -> None:
    """Write text so that no partial file is ever observable at ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-spinpair-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path: str, config: dict, payload, started: float) -> None:
    envelope = {
        "tool_version": __version__,
        "config": config,
        "duration_seconds": round(time.time() - started, 3),
        "payload": payload,
    }
    atomic_write(path, dump_json(envelope))


def _load_posts_file(path: str) -> tuple[Post, Post]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    posts = []
    for side in ("left", "right"):
        marks = tuple(
            Mark(m["id"], UnitVec.from_array([m["x"], m["y"], m["z"]], normalize=True))
            for m in doc[side]
        )
        posts.append(Post(side, marks))
    return posts[0], posts[1]


def _posts_payload(posts: tuple[Post, Post]) -> dict:
    return {
        side.side: [
            {
                "id": m.id,
                "x": m.orientation.x,
                "y": m.orientation.y,
                "z": m.orientation.z,
            }
            for m in side.marks
        ]
        for side in posts
    }


def _resolve_posts(cfg: dict) -> tuple[Post, Post]:
    if cfg.get("posts_file"):
        return _load_posts_file(cfg["posts_file"])
    marks = cfg.get("marks") or "8x8"
    try:
        n_left, n_right = (int(part) for part in marks.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"bad --marks value {marks!r}, expected like '8x8'") from exc
    return generate_posts(n_left, n_right, seed=cfg["seed"])


def _coplanar(deg: float) -> UnitVec:
    rad = math.radians(deg)
    return UnitVec(math.cos(rad), math.sin(rad), 0.0)


def angle_matrix_csv(ids, matrix) -> str:
    lines = ["," + ",".join(ids)]
    for mark_id, row in zip(ids, matrix):
        lines.append(mark_id + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# --- subcommand runners -------------------------------------------------


def _run_simulate(cfg: dict) -> dict:
    posts = _resolve_posts(cfg)
    records = generate_logbook(
        posts,
        cfg["backend"],
        cfg["pairs"],
        seed=cfg["seed"],
        workers=cfg["workers"],
        schedule=cfg["schedule"],
    )
    atomic_write(cfg["out"], logbook_to_csv(records))
    if cfg.get("posts_out"):
        atomic_write(cfg["posts_out"], dump_json(_posts_payload(posts)))
    return {
        "records": len(records),
        "backend": cfg["backend"],
        "out": cfg["out"],
        "posts": {p.side: list(p.ids) for p in posts},
    }


def _run_stats(cfg: dict) -> dict:
    with open(cfg["logbook"], encoding="utf-8") as fh:
        records = logbook_from_csv(fh.read())
    stats = estimate_pair_stats(records)
    atomic_write(cfg["out"], dump_json(stats.to_records()))
    return {"pairs": len(stats), "records": len(records), "out": cfg["out"]}


def _load_stats(path: str) -> PairStats:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    stats = PairStats()
    for row in rows:
        stats[(row["left"], row["right"])] = (int(row["n"]), float(row["p_hat"]))
    return stats


def _run_reconstruct(cfg: dict) -> dict:
    stats = _load_stats(cfg["stats"])
    angles = angles_from_stats(stats, cfg["hypothesis"])
    solution = embed_on_sphere(angles, max_iter=cfg["max_iter"], tol=cfg["tol"])
    atomic_write(cfg["out"], dump_json(solution.to_dict()))
    payload: dict = {
        "stress": solution.stress,
        "iterations": solution.iterations,
        "rank_deficient": solution.rank_deficient,
        "out": cfg["out"],
    }
    completed = completed_cosine_matrix(angles, solution)
    min_trials = int(min(n for n, _ in stats.values()))
    report = embeddability_test(
        completed, tol=sampled_noise_tolerance(angles.n, min_trials)
    )
    payload["embeddability"] = {
        "lambda4": report.lambda4,
        "psd_ok": report.psd_ok,
        "rank3_ok": report.rank3_ok,
        "tolerance": report.tol_rank,
    }
    if cfg.get("angles_out"):
        full = np.arccos(np.clip(completed, -1.0, 1.0))
        atomic_write(cfg["angles_out"], angle_matrix_csv(angles.ids, full))
    if cfg.get("truth"):
        posts = _load_posts_file(cfg["truth"])
        truth = {
            m.id: m.orientation.as_array() for p in posts for m in p.marks
        }
        payload["alignment"] = {
            k: v for k, v in align_and_score(solution, truth).items() if k != "per_mark"
        }
    return payload


def _run_verify_dist(cfg: dict) -> dict:
    sampler = SAMPLERS[cfg["sampler"]]
    report = verify_marginals(
        sampler, RandomStream(cfg["seed"]), cfg["n"], bins=cfg["bins"]
    )
    payload = report.to_dict()
    payload["sampler"] = cfg["sampler"]
    atomic_write(cfg["out"], dump_json(payload))
    return payload


def _run_chsh(cfg: dict) -> dict:
    degs = [float(v) for v in cfg["angles"].split(",")]
    if len(degs) != 4:
        raise ValueError("--angles needs four comma-separated degrees: a,a',b,b'")
    a, a_p, b, b_p = (_coplanar(d) for d in degs)
    result = chsh(cfg["backend"], a, a_p, b, b_p, cfg["n_per_setting"], cfg["seed"])
    result["angles_deg"] = degs
    atomic_write(cfg["out"], dump_json(result))
    return result


def _run_fit_density(cfg: dict) -> dict:
    constraints = tuple(c.strip() for c in cfg["constraints"].split(",") if c.strip())
    fit = fit_discrete_density(
        cfg["grid_n"],
        objective=cfg["objective"],
        constraints=constraints,
        tol=cfg["tol"],
        max_iter=cfg["max_iter"],
    )
    atomic_write(cfg["out"], fit.to_text())
    return {
        "grid_n": fit.grid_n,
        "objective": cfg["objective"],
        "constraints": list(constraints),
        "residuals": fit.residuals,
        "out": cfg["out"],
    }


def _run_geodesic(cfg: dict) -> dict:
    constants = GeodesicConstants(P=cfg["P"], X=cfg["X"], A=cfg["A"], W=cfg["W"])
    state = state_from_constants(
        constants,
        cfg["r0"],
        cfg["theta0"],
        sign_ur=cfg["sign_ur"],
        sign_utheta=cfg["sign_utheta"],
    )
    traj = integrate(
        state, cfg["span"], rel_tol=cfg["rel_tol"], abs_tol=cfg["abs_tol"]
    )
    atomic_write(cfg["out"], trajectory_csv(traj))
    orbit = classify_orbit(constants)
    payload = summary_report(traj)
    payload["orbit_class"] = orbit.kind
    payload["r_min_predicted"] = orbit.r_min
    payload["r_max_predicted"] = orbit.r_max
    payload["tilt"] = tilt(constants)
    payload["out"] = cfg["out"]
    try:
        rates = node_precession(traj)
        payload["node_rates"] = {
            "mean_measured": rates["mean_measured"],
            "mean_predicted": rates["mean_predicted"],
            "pairs": [
                {
                    "t_start": row.t_start,
                    "t_end": row.t_end,
                    "measured_rate": row.measured_rate,
                    "predicted_rate": row.predicted_rate,
                }
                for row in rates["pairs"]
            ],
        }
    except NoNodes as exc:
        payload["node_rates"] = {"error": str(exc)}
    if cfg.get("svg"):
        atomic_write(cfg["svg"], stereogram_svg(traj, offset_deg=cfg["svg_offset"]))
    return payload


_RUNNERS = {
    "simulate": _run_simulate,
    "stats": _run_stats,
    "reconstruct": _run_reconstruct,
    "verify-dist": _run_verify_dist,
    "chsh": _run_chsh,
    "fit-density": _run_fit_density,
    "geodesic": _run_geodesic,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinpair",
        description="Spin-correlation experiment simulator and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--report", help="write a report envelope JSON here")
        return p

    p = add("simulate", "generate a logbook CSV")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--pairs", type=int)
    p.add_argument("--marks", help="posts shorthand like 8x8 (seeded orientations)")
    p.add_argument("--posts-file", dest="posts_file", help="explicit posts JSON")
    p.add_argument("--posts-out", dest="posts_out", help="write the true posts JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--schedule", choices=("uniform", "cyclic"))
    p.add_argument("--out")

    p = add("stats", "aggregate a logbook into pair statistics JSON")
    p.add_argument("--logbook")
    p.add_argument("--out")

    p = add("reconstruct", "embed marks on a sphere from stats JSON")
    p.add_argument("--stats")
    p.add_argument("--hypothesis", choices=HYPOTHESES)
    p.add_argument("--truth", help="posts JSON with true orientations")
    p.add_argument("--angles-out", dest="angles_out", help="completed angle matrix CSV")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")

    p = add("verify-dist", "Monte Carlo constraint report for a sampler")
    p.add_argument("--sampler", choices=sorted(SAMPLERS))
    p.add_argument("--n", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("chsh", "four-setting correlation combination")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--n-per-setting", dest="n_per_setting", type=int)
    p.add_argument("--angles", help="a,a',b,b' in degrees, coplanar")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("fit-density", "fit a discrete density under the constraints")
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--objective", choices=("max-entropy", "min-l2"))
    p.add_argument("--constraints", help="comma list of " + ",".join(CONSTRAINT_NAMES))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--out")

    p = add("geodesic", "integrate a geodesic and report diagnostics")
    for flag in ("A", "P", "W", "X"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--theta0", type=float)
    p.add_argument("--sign-ur", dest="sign_ur", type=int, choices=(-1, 1))
    p.add_argument("--sign-utheta", dest="sign_utheta", type=int, choices=(-1, 1))
    p.add_argument("--span", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--svg", help="write a stereogram SVG here")
    p.add_argument("--svg-offset", dest="svg_offset", type=float)
    p.add_argument("--out")

    return parser


_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "backend": "qm", "pairs": None, "marks": None, "posts_file": None,
        "posts_out": None, "seed": None, "workers": 1, "schedule": "uniform",
        "out": None,
    },
    "stats": {"logbook": None, "out": None},
    "reconstruct": {
        "stats": None, "hypothesis": "qm_sin2", "truth": None, "angles_out": None,
        "max_iter": 5000, "tol": 1e-14, "out": None,
    },
    "verify-dist": {"sampler": None, "n": 1_000_000, "bins": 20, "seed": None, "out": None},
    "chsh": {
        "backend": "qm", "n_per_setting": 1_000_000,
        "angles": "0,90,45,135", "seed": None, "out": None,
    },
    "fit-density": {
        "grid_n": 20, "objective": "max-entropy",
        "constraints": ",".join(CONSTRAINT_NAMES), "tol": 1e-9, "max_iter": 5000,
        "out": None,
    },
    "geodesic": {
        "A": None, "P": None, "W": None, "X": None, "r0": None, "theta0": None,
        "sign_ur": 1, "sign_utheta": 1, "span": None, "rel_tol": 1e-10,
        "abs_tol": 1e-12, "svg": None, "svg_offset": 4.0, "out": None,
    },
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "simulate": ("pairs", "out"),
    "stats": ("logbook", "out"),
    "reconstruct": ("stats", "out"),
    "verify-dist": ("sampler", "out"),
    "chsh": ("out",),
    "fit-density": ("out",),
    "geodesic": ("A", "P", "W", "X", "r0", "theta0", "span", "out"),
}


def resolve_config(command: str, args: argparse.Namespace, parser) -> dict:
    """Merge flag/file/default values; flags win, then file, then defaults."""
    cfg = dict(_DEFAULTS[command])
    if args.config is not None:
        if not os.path.exists(args.config):
            parser.error(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                parser.error(f"config file is not valid JSON: {exc}")
        unknown = set(file_values) - set(cfg)
        if unknown:
            parser.error(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_values)
    for key in cfg:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            cfg[key] = flag_value
    if command in _STOCHASTIC and cfg.get("seed") is None:
        parser.error(f"{command} is stochastic: --seed is required")
    for key in _REQUIRED[command]:
        if cfg.get(key) is None:
            parser.error(f"missing required value --{key.replace('_', '-')}")
    cfg["command"] = command
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a subcommand is required")
    cfg = resolve_config(args.command, args, parser)
    started = time.time()
    try:
        payload = _RUNNERS[args.command](cfg)
    except Exception as exc:  # runtime failure -> exit 1, one line
        print(f"spinpair {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.report:
        write_report(args.report, cfg, payload, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
