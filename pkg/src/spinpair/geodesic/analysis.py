"""Orbit diagnostics and trajectory export.

Node precession is measured with the precessing-plane decomposition:
the motion is written as a point moving in a plane of fixed tilt
``iota`` (``cos(iota) = |S|``, ``sin(iota) = sqrt(1 - S^2)``) whose node
line rotates about the symmetry axis.  The in-plane angle runs against
the node rotation for ``X > 0`` (and with it for ``X < 0``), which is
the branch that keeps the decomposition smooth; the node azimuth then
advances as ``d(psi)/dt = 1/r`` for circular orbits.  Tracking the
unwrapped node azimuth along the dense samples resolves the whole-turn
ambiguity that looking at crossing azimuths alone would leave.

At an equatorial crossing the in-plane angle is a multiple of ``pi``,
so the node azimuth coincides with the crossing azimuth ``phi`` there
(mod ``pi``), as it must.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import Trajectory, conserved_drift, constants_array

__all__ = [
    "NoNodes",
    "node_precession",
    "export_trajectory",
    "trajectory_csv",
    "stereogram_svg",
]


class NoNodes(ValueError):
    """The trajectory never crosses the equatorial plane."""


def _node_azimuth_series(traj: Trajectory) -> np.ndarray:
    """Unwrapped node-line azimuth psi at every trajectory sample."""
    p0, x0, a0, _ = traj.constants0
    s_tilt = x0 / math.sqrt(a0)
    sin_iota = math.sqrt(max(0.0, 1.0 - s_tilt * s_tilt))
    cos_iota = abs(s_tilt)
    if sin_iota < 1e-9:
        raise NoNodes("equatorial trajectory: tilt |S| = 1")

    theta = traj.states[:, 2]
    phi = traj.states[:, 3]
    u_th = traj.states[:, 6]
    u = np.cos(theta)
    du = -np.sin(theta) * u_th
    sign_gamma = -1.0 if x0 > 0 else 1.0

    sin_g = np.clip(u / sin_iota, -1.0, 1.0)
    cos_g_mag = np.sqrt(np.maximum(0.0, 1.0 - sin_g * sin_g))
    cos_sign = np.where(np.sign(du) != 0, np.sign(du) * sign_gamma, 1.0)
    gamma = np.arctan2(sin_g, cos_sign * cos_g_mag)
    psi_raw = phi - np.arctan2(cos_iota * np.sin(gamma), np.cos(gamma))
    return np.unwrap(psi_raw)


@dataclass(frozen=True)
class NodeRateRow:
    t_start: float
    t_end: float
    measured_rate: float
    predicted_rate: float  # 1 / (mean r between the nodes)


def node_precession(traj: Trajectory) -> dict:
    """Measured node rotation rate per ascending-node pair vs 1/r.

    Requires at least two ascending equatorial crossings; raises
    :class:`NoNodes` otherwise (in particular for equatorial orbits).
    The predicted rate uses the mean sampled radius between the nodes;
    for circular orbits the comparison is exact, for eccentric orbits
    it is reported as-is.
    """
    ascending = [e for e in traj.events_of("equator") if e.direction == "ascending"]
    if len(ascending) < 2:
        raise NoNodes(
            f"need at least 2 ascending equatorial crossings, found {len(ascending)}"
        )
    psi = _node_azimuth_series(traj)
    s = traj.s
    t = traj.states[:, 0]
    r = traj.states[:, 1]

    rows: list[NodeRateRow] = []
    for e0, e1 in zip(ascending[:-1], ascending[1:]):
        psi0, psi1 = np.interp([e0.s, e1.s], s, psi)
        t0, t1 = np.interp([e0.s, e1.s], s, t)
        inside = (s >= e0.s) & (s <= e1.s)
        r_mean = float(r[inside].mean()) if inside.any() else float(np.interp(e0.s, s, r))
        rows.append(
            NodeRateRow(
                t_start=float(t0),
                t_end=float(t1),
                measured_rate=float((psi1 - psi0) / (t1 - t0)),
                predicted_rate=1.0 / r_mean,
            )
        )
    measured = np.array([row.measured_rate for row in rows])
    predicted = np.array([row.predicted_rate for row in rows])
    return {
        "pairs": rows,
        "mean_measured": float(measured.mean()),
        "mean_predicted": float(predicted.mean()),
        "max_abs_mismatch": float(np.abs(measured - predicted).max()),
    }


def export_trajectory(traj: Trajectory, projection: str = "cartesian", offset_deg: float = 4.0) -> dict:
    """Tabular sample export.

    ``cartesian`` gives columns ``(s, x, y, z)``.  ``stereogram-pair``
    gives two orthographic views onto the x-z plane, the model rotated
    about the symmetry axis by ``+-offset_deg/2``:
    ``(s, left_u, left_v, right_u, right_v)``.
    """
    if traj.n_samples == 0:
        raise ValueError("empty trajectory")
    r = traj.states[:, 1]
    th = traj.states[:, 2]
    ph = traj.states[:, 3]
    st = np.sin(th)
    x = r * st * np.cos(ph)
    y = r * st * np.sin(ph)
    z = r * np.cos(th)
    if projection == "cartesian":
        return {
            "columns": ["s", "x", "y", "z"],
            "rows": np.stack([traj.s, x, y, z], axis=1),
        }
    if projection == "stereogram-pair":
        half = math.radians(offset_deg) / 2.0
        views = []
        for delta in (+half, -half):
            u = x * math.cos(delta) - y * math.sin(delta)
            views.append(u)
        return {
            "columns": ["s", "left_u", "left_v", "right_u", "right_v"],
            "rows": np.stack([traj.s, views[0], z, views[1], z], axis=1),
        }
    raise ValueError(f"unknown projection {projection!r}")


def trajectory_csv(traj: Trajectory) -> str:
    """Per-step CSV with coordinates, velocities and per-sample drift."""
    c = constants_array(traj.states)
    c0 = np.asarray(traj.constants0)
    denom = np.maximum(1.0, np.abs(c0))
    drift = np.abs(c - c0[None, :]) / denom
    header = "s,t,r,theta,phi,Ut,Ur,Utheta,Uphi,drift_P,drift_X,drift_A,drift_W"
    lines = [header]
    for i in range(traj.n_samples):
        y = traj.states[i]
        vals = [traj.s[i], *y, *drift[i]]
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def summary_report(traj: Trajectory) -> dict:
    """Constants, drift, events and extrema in one serializable dict."""
    p, x, a, w = traj.constants0
    return {
        "constants": {"P": p, "X": x, "A": a, "W": w},
        "status": traj.status,
        "backend": traj.backend,
        "samples": traj.n_samples,
        "min_r": traj.min_r,
        "min_sin_theta": traj.min_sin_theta,
        "drift": conserved_drift(traj),
        "events": [
            {"kind": e.kind, "s": e.s, "direction": e.direction, "r": float(e.state[1])}
            for e in traj.events
        ],
    }


def stereogram_svg(traj: Trajectory, offset_deg: float = 4.0, size: int = 420) -> str:
    """Side-by-side polyline stereogram of the trajectory."""
    data = export_trajectory(traj, "stereogram-pair", offset_deg)["rows"]
    views = [(data[:, 1], data[:, 2]), (data[:, 3], data[:, 4])]
    allu = np.concatenate([v[0] for v in views])
    allv = np.concatenate([v[1] for v in views])
    lo = min(allu.min(), allv.min())
    hi = max(allu.max(), allv.max())
    span = max(hi - lo, 1e-12)
    pad = 10.0

    def scaled(u, v):
        sx = pad + (u - lo) / span * (size - 2 * pad)
        sy = pad + (hi - v) / span * (size - 2 * pad)
        return sx, sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * size}" height="{size}" '
        f'viewBox="0 0 {2 * size} {size}">',
        f'<rect width="{2 * size}" height="{size}" fill="white"/>',
    ]
    for k, (u, v) in enumerate(views):
        sx, sy = scaled(u, v)
        pts = " ".join(f"{px + k * size:.2f},{py:.2f}" for px, py in zip(sx, sy))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="0.6"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
