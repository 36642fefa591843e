"""Logbook generation and pair statistics for two-post spin experiments.

A trial orients each post's instrument at one of its identifiable marks,
fires a particle pair and records three values: the left mark id, the
right mark id and whether the two detectors agreed (``S``) or not
(``N``).  The true mark orientations are known to the simulator but are
never written to the logbook; all downstream analysis works from the
three recorded columns alone.

Three measurement backends are available:

* ``qm``      -- samples the joint outcome directly from the singlet
  probabilities P(same) = sin^2(theta/2), split evenly between up-up
  and down-down (and likewise for "not same").  No hidden variable is
  drawn; this backend is the oracle, not a model.
* ``classical`` -- a shared isotropic hidden axis; each detector
  reports the sign of its instrument's inner product with its
  particle's axis (the twin axis is anti-parallel).
* ``tetra``   -- hidden variables drawn from the four-plane delta
  distribution conditioned on ``z_ab = -a.b``.

Ties (inner product exactly zero) resolve to "up"; any fixed convention
leaves the statistics unchanged.

Trials are generated in fixed-size chunks, each chunk on its own child
random stream, so output is byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .geometry import (
    RandomStream,
    UnitVec,
    angle_between,
    sample_uniform_directions,
    split_stream,
)
from .hidden import tetra_sample_batch

__all__ = [
    "Mark",
    "Post",
    "TripletRecord",
    "OutcomePair",
    "PairStats",
    "BACKENDS",
    "run_pair",
    "run_pairs_batch",
    "generate_logbook",
    "generate_posts",
    "estimate_pair_stats",
    "correlation",
    "chsh",
    "logbook_to_csv",
    "logbook_from_csv",
    "CHUNK_TRIALS",
]

BACKENDS = ("qm", "classical", "tetra")
CHUNK_TRIALS = 1 << 16


@dataclass(frozen=True)
class Mark:
    """An identifiable instrument orientation; the id is all the logbook sees."""

    id: str
    orientation: UnitVec


@dataclass(frozen=True)
class Post:
    side: str  # "left" or "right"
    marks: tuple[Mark, ...]

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        if not self.marks:
            raise ValueError("a post needs at least one mark")
        ids = [m.id for m in self.marks]
        if len(set(ids)) != len(ids):
            raise ValueError("mark ids must be unique per post")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.marks)

    def orientations(self) -> np.ndarray:
        return np.stack([m.orientation.as_array() for m in self.marks])


@dataclass(frozen=True)
class TripletRecord:
    left: str
    right: str
    outcome: str  # "S" or "N"


@dataclass(frozen=True)
class OutcomePair:
    a_up: bool
    b_up: bool

    @property
    def same(self) -> bool:
        return self.a_up == self.b_up

    @property
    def outcome(self) -> str:
        return "S" if self.same else "N"


class PairStats(dict):
    """Per (left id, right id): trial count and empirical same-fraction.

    Maps ``(left, right) -> (n, p_hat)``.  Pairs never observed are
    absent, not zero-filled.
    """

    def merge(self, other: "PairStats") -> "PairStats":
        out = PairStats(self)
        for key, (n2, p2) in other.items():
            if key in out:
                n1, p1 = out[key]
                n = n1 + n2
                out[key] = (n, (n1 * p1 + n2 * p2) / n)
            else:
                out[key] = (n2, p2)
        return out

    def to_records(self) -> list[dict]:
        return [
            {"left": l, "right": r, "n": n, "p_hat": p}
            for (l, r), (n, p) in sorted(self.items())
        ]


def _same_probability(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # P(S) = sin^2(theta/2) = (1 - a.b)/2
    return 0.5 * (1.0 - np.einsum("ij,ij->i", a, b))


def run_pairs_batch(backend: str, a: np.ndarray, b: np.ndarray, rng: RandomStream):
    """Vectorized trial outcomes for per-trial orientations ``a``, ``b``.

    Returns ``(a_up, b_up)`` boolean arrays.  Draw order per backend is
    fixed and documented in the module docstring.
    """
    n = a.shape[0]
    if backend == "qm":
        p_same = _same_probability(a, b)
        same = rng.uniform(0.0, 1.0, n) < p_same
        a_up = rng.uniform(0.0, 1.0, n) < 0.5
        b_up = np.where(same, a_up, ~a_up)
        return a_up, b_up
    if backend == "classical":
        c = sample_uniform_directions(rng, n)
        a_up = np.einsum("ij,ij->i", a, c) >= 0.0
        b_up = -np.einsum("ij,ij->i", b, c) >= 0.0
        return a_up, b_up
    if backend == "tetra":
        u = -np.einsum("ij,ij->i", a, b)
        z_a, z_b = tetra_sample_batch(u, rng)
        return z_a >= 0.0, z_b >= 0.0
    raise ValueError(f"unknown backend {backend!r}")


def run_pair(backend: str, a: UnitVec, b: UnitVec, rng: RandomStream) -> OutcomePair:
    """One trial at orientations ``a``, ``b``; see :func:`run_pairs_batch`."""
    a_up, b_up = run_pairs_batch(
        backend, a.as_array()[None, :], b.as_array()[None, :], rng
    )
    return OutcomePair(bool(a_up[0]), bool(b_up[0]))


def generate_posts(n_left: int, n_right: int, seed: int) -> tuple[Post, Post]:
    """Posts with seeded random true orientations and ids ``L1.. / R1..``."""
    rng = RandomStream(seed, stream=0xA11CE)
    dirs = sample_uniform_directions(rng, n_left + n_right)
    left = Post(
        "left",
        tuple(
            Mark(f"L{i + 1}", UnitVec.from_array(dirs[i], normalize=True))
            for i in range(n_left)
        ),
    )
    right = Post(
        "right",
        tuple(
            Mark(f"R{i + 1}", UnitVec.from_array(dirs[n_left + i], normalize=True))
            for i in range(n_right)
        ),
    )
    return left, right


def _chunk_records(args):
    backend, left_orient, right_orient, n, schedule, first_trial, rng = args
    nl = left_orient.shape[0]
    nr = right_orient.shape[0]
    if schedule == "uniform":
        li = rng.integers(nl, size=n)
        ri = rng.integers(nr, size=n)
    else:  # cyclic
        t = np.arange(first_trial, first_trial + n)
        li = t % nl
        ri = (t // nl) % nr
    a_up, b_up = run_pairs_batch(backend, left_orient[li], right_orient[ri], rng)
    return li, ri, a_up == b_up


def generate_logbook(
    posts: tuple[Post, Post],
    backend: str,
    n_pairs: int,
    seed: int,
    workers: int = 1,
    schedule: str = "uniform",
) -> list[TripletRecord]:
    """Simulate ``n_pairs`` trials and return the logbook records.

    Each trial picks one mark per post (independently and uniformly, or
    round-robin with ``schedule="cyclic"``), runs the backend and
    records only (left id, right id, S/N).  Output is a pure function of
    the arguments; ``workers`` affects wall time only.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if schedule not in ("uniform", "cyclic"):
        raise ValueError("schedule must be 'uniform' or 'cyclic'")
    left, right = posts
    lo, ro = left.orientations(), right.orientations()
    root = RandomStream(seed)

    tasks = []
    start = 0
    k = 0
    while start < n_pairs:
        n = min(CHUNK_TRIALS, n_pairs - start)
        tasks.append((backend, lo, ro, n, schedule, start, split_stream(root, k)))
        start += n
        k += 1

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_records, tasks))
    else:
        parts = [_chunk_records(t) for t in tasks]

    lids, rids = left.ids, right.ids
    records = []
    for li, ri, same in parts:
        records.extend(
            TripletRecord(lids[i], rids[j], "S" if s else "N")
            for i, j, s in zip(li.tolist(), ri.tolist(), same.tolist())
        )
    return records


def estimate_pair_stats(records, known_left=None, known_right=None) -> PairStats:
    """Exact counting of same-fractions per (left, right) pair.

    If ``known_left`` / ``known_right`` id collections are given, any
    record referring to an id outside them raises ``ValueError``.
    """
    counts: dict[tuple[str, str], list[int]] = {}
    kl = set(known_left) if known_left is not None else None
    kr = set(known_right) if known_right is not None else None
    for rec in records:
        if kl is not None and rec.left not in kl:
            raise ValueError(f"unknown left mark id {rec.left!r}")
        if kr is not None and rec.right not in kr:
            raise ValueError(f"unknown right mark id {rec.right!r}")
        if rec.outcome not in ("S", "N"):
            raise ValueError(f"invalid outcome {rec.outcome!r}")
        c = counts.setdefault((rec.left, rec.right), [0, 0])
        c[0] += 1
        if rec.outcome == "S":
            c[1] += 1
    stats = PairStats()
    for key, (n, ns) in counts.items():
        stats[key] = (n, ns / n)
    return stats


def correlation(p_same: float) -> float:
    """E = P(S) - P(N) = 2 p - 1, the correlation of a setting pair."""
    if not 0.0 <= p_same <= 1.0:
        raise ValueError("p_same must lie in [0, 1]")
    return 2.0 * p_same - 1.0


def chsh(
    backend: str,
    a: UnitVec,
    a_prime: UnitVec,
    b: UnitVec,
    b_prime: UnitVec,
    n_per_setting: int,
    seed: int,
) -> dict:
    """Monte Carlo CHSH combination S = E(a,b) - E(a,b') + E(a',b) + E(a',b').

    Each correlation is estimated from ``n_per_setting`` trials on its
    own child stream.  Returns the value, a 1-sigma error bar and the
    per-setting correlations.
    """
    if n_per_setting < 10_000:
        raise ValueError("need at least 1e4 trials per setting")
    root = RandomStream(seed)
    settings = [(a, b, +1.0), (a, b_prime, -1.0), (a_prime, b, +1.0), (a_prime, b_prime, +1.0)]
    total = 0.0
    var = 0.0
    details = []
    for k, (x, y, sign) in enumerate(settings):
        rng = split_stream(root, k)
        # chunked to bound memory at large n
        ns = 0
        n_same = 0
        remaining = n_per_setting
        ci = 0
        while remaining > 0:
            m = min(CHUNK_TRIALS, remaining)
            sub = split_stream(rng, ci)
            a_up, b_up = run_pairs_batch(
                backend,
                np.repeat(x.as_array()[None, :], m, axis=0),
                np.repeat(y.as_array()[None, :], m, axis=0),
                sub,
            )
            n_same += int((a_up == b_up).sum())
            ns += m
            remaining -= m
            ci += 1
        p = n_same / ns
        e = correlation(p)
        total += sign * e
        var += 4.0 * p * (1.0 - p) / ns
        details.append(
            {"theta": angle_between(x, y), "sign": sign, "p_same": p, "correlation": e}
        )
    return {
        "backend": backend,
        "n_per_setting": n_per_setting,
        "S": total,
        "sigma": float(np.sqrt(var)),
        "settings": details,
    }


def logbook_to_csv(records) -> str:
    """Logbook as CSV text: header ``left_mark,right_mark,outcome``, LF endings."""
    buf = StringIO()
    buf.write("left_mark,right_mark,outcome\n")
    for rec in records:
        buf.write(f"{rec.left},{rec.right},{rec.outcome}\n")
    return buf.getvalue()


def logbook_from_csv(text: str) -> list[TripletRecord]:
    lines = text.strip().split("\n")
    if lines[0] != "left_mark,right_mark,outcome":
        raise ValueError("bad logbook header")
    out = []
    for line in lines[1:]:
        left, right, outcome = line.split(",")
        out.append(TripletRecord(left, right, outcome))
    return out
