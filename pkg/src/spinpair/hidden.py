"""Joint distributions of the three hidden-variable inner products.

A measurement configuration is fully parameterized by three signed
inner products in ``[-1, 1]``:

* ``z_a``  -- left instrument axis against the hidden spin axis,
* ``z_b``  -- right instrument axis against the (anti-parallel) twin's
  spin axis,
* ``z_ab`` -- minus the inner product of the two instrument axes.  The
  sign compensates for the anti-parallel spins, so perfect correlation
  (always "same") sits at ``z_ab = +1``.

This module provides the three candidate joint distributions (the
classical three-vector density, the factorized product density and the
four-plane delta distribution together with its sampler), plus a
Monte Carlo verifier for the three defining constraints:

1. uniform marginal of ``z_ab`` (density 1/2),
2. locality: uniform pair density of ``(z_a, z_ab)`` (density 1/4),
3. conditional agreement probability P(up, up | z_ab) = (1 + z_ab)/4.

Note on the classical density normalization: the correctly normalized
joint density of the three inner products of three isotropic directions
is ``(4 pi sqrt(D))**-1`` on its support ``D > 0``.  This is forced by
constraint 2 (integrating out one variable must give the uniform pair
density 1/4) and is confirmed by direct Monte Carlo histograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RandomStream, sample_uniform_directions

__all__ = [
    "HiddenTriple",
    "ConstraintReport",
    "classical_density",
    "support_determinant",
    "triangle_bounds",
    "tetra_branches",
    "tetra_sample",
    "tetra_sample_batch",
    "sample_factorized",
    "tetra_triples",
    "factorized_triples",
    "classical_triples",
    "classical_upup_probability",
    "verify_marginals",
]

# Candidate z_b values solve one of the four plane relations
#   z_a + z_b + z_ab + 1 = 0
#   z_a - z_b - z_ab + 1 = 0
#   z_a + z_b - z_ab - 1 = 0
#   z_a - z_b + z_ab - 1 = 0
# i.e. z_b = sign_a * z_a + sign_c * (1 + sign_a * z_ab) patterns below.
_BRANCH_TOL = 1e-12


@dataclass(frozen=True)
class HiddenTriple:
    """One configuration sample ``(z_a, z_b, z_ab)``, all in [-1, 1]."""

    z_a: float
    z_b: float
    z_ab: float

    def __post_init__(self):
        for name in ("z_a", "z_b", "z_ab"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v!r} outside [-1, 1]")


def support_determinant(s, t, u):
    """D = 1 + 2stu - s^2 - t^2 - u^2, positive on the classical support."""
    s, t, u = np.asarray(s, float), np.asarray(t, float), np.asarray(u, float)
    return 1.0 + 2.0 * s * t * u - s * s - t * t - u * u


def classical_density(s, t, u):
    """Joint density of the inner products of three isotropic directions.

    Returns ``(4 pi sqrt(D))**-1`` where ``D = 1 + 2stu - s^2 - t^2 - u^2``
    when ``D > 0`` and 0 otherwise.  Works elementwise on arrays.  The
    density is invariant under flipping the signs of any two arguments,
    so it applies unchanged to the anti-parallel sign convention.
    """
    d = support_determinant(s, t, u)
    inside = d > 0.0
    out = np.zeros_like(d, dtype=float)
    np.divide(1.0, 4.0 * np.pi * np.sqrt(np.where(inside, d, 1.0)), out=out, where=inside)
    if out.ndim == 0:
        return float(out)
    return out


def triangle_bounds(alpha1: float, alpha2: float) -> tuple[float, float]:
    """Allowed interval for the third angle of a spherical configuration.

    Returns ``[|a1 - a2|, min(a1 + a2, 2 pi - a1 - a2)]``.  The upper
    bound carries the extra ``2 pi - a1 - a2`` term: the support of
    :func:`classical_density` requires the *sum* of the three angles not
    to exceed ``2 pi`` as well, and the returned interval is exactly the
    closure of the positive-density region.
    """
    if not (0.0 <= alpha1 <= np.pi and 0.0 <= alpha2 <= np.pi):
        raise ValueError("angles must lie in [0, pi]")
    lo = abs(alpha1 - alpha2)
    hi = min(alpha1 + alpha2, 2.0 * np.pi - alpha1 - alpha2)
    return lo, hi


def tetra_branches(z_a: float, z_ab: float) -> list[float]:
    """Valid ``z_b`` values of the four-plane delta distribution.

    Solves the four plane relations for ``z_b`` and keeps the solutions
    inside ``[-1, 1]`` (within 1e-12, then clamped; boundary roots are
    meaningful perfect-correlation cases).  Generic inputs give exactly
    two candidates; coinciding double roots are returned once.
    """
    cands = (
        -1.0 - z_a - z_ab,
        z_a - z_ab + 1.0,
        1.0 + z_ab - z_a,
        z_a + z_ab - 1.0,
    )
    out: list[float] = []
    for c in cands:
        if abs(c) <= 1.0 + _BRANCH_TOL:
            c = min(1.0, max(-1.0, c))
            if not any(abs(c - prev) <= _BRANCH_TOL for prev in out):
                out.append(c)
    return out


def tetra_sample(z_ab: float, rng: RandomStream) -> tuple[float, float]:
    """Draw one ``(z_a, z_b)`` from the four-plane distribution at fixed ``z_ab``.

    ``z_a`` is uniform on [-1, 1] (the locality constraint makes the
    pair density of ``(z_a, z_ab)`` flat); ``z_b`` is then an unbiased
    choice among the valid plane branches.
    """
    if not -1.0 <= z_ab <= 1.0:
        raise ValueError("z_ab outside [-1, 1]")
    z_a = float(rng.uniform(-1.0, 1.0))
    branches = tetra_branches(z_a, z_ab)
    k = int(rng.uniform(0.0, 1.0) * len(branches))
    if k == len(branches):  # guard the half-open interval edge
        k -= 1
    return z_a, branches[k]


def tetra_sample_batch(z_ab: np.ndarray, rng: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`tetra_sample` for an array of ``z_ab`` values.

    Draw order is fixed (all ``z_a`` first, then all branch selectors),
    so output depends only on the stream address and ``len(z_ab)``.
    """
    z_ab = np.asarray(z_ab, dtype=float)
    n = z_ab.shape[0]
    z_a = rng.uniform(-1.0, 1.0, n)
    coin = rng.uniform(0.0, 1.0, n)

    cands = np.stack(
        [
            -1.0 - z_a - z_ab,
            z_a - z_ab + 1.0,
            1.0 + z_ab - z_a,
            z_a + z_ab - 1.0,
        ],
        axis=1,
    )
    valid = np.abs(cands) <= 1.0 + _BRANCH_TOL
    nvalid = valid.sum(axis=1)
    # valid branch values can coincide only in pairs (double roots), so
    # an unbiased pick among the valid slots stays unbiased among values
    pick = np.minimum((coin * nvalid).astype(np.int64), nvalid - 1)
    order = np.argsort(~valid, axis=1, kind="stable")  # valid slots first
    chosen = np.take_along_axis(cands, np.take_along_axis(order, pick[:, None], axis=1), axis=1)[:, 0]
    return z_a, np.clip(chosen, -1.0, 1.0)


def sample_factorized(rng: RandomStream) -> HiddenTriple:
    """Draw one triple from the fully factorized (all independent) density."""
    v = rng.uniform(-1.0, 1.0, 3)
    return HiddenTriple(float(v[0]), float(v[1]), float(v[2]))


# --- bulk triple samplers (rng, n) -> (n, 3) array [z_a, z_b, z_ab] ---


def tetra_triples(rng: RandomStream, n: int) -> np.ndarray:
    z_ab = rng.uniform(-1.0, 1.0, n)
    z_a, z_b = tetra_sample_batch(z_ab, rng)
    return np.stack([z_a, z_b, z_ab], axis=1)


def factorized_triples(rng: RandomStream, n: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, (n, 3))


def classical_triples(rng: RandomStream, n: int) -> np.ndarray:
    """Three isotropic directions, reported in the anti-parallel convention.

    With hidden axis ``c`` for the left particle and ``-c`` for its twin,
    the triple is ``(a.c, -b.c, -a.b)``; its joint density is exactly
    :func:`classical_density`.
    """
    a = sample_uniform_directions(rng, n)
    b = sample_uniform_directions(rng, n)
    c = sample_uniform_directions(rng, n)
    z_a = np.einsum("ij,ij->i", a, c)
    z_b = -np.einsum("ij,ij->i", b, c)
    z_ab = -np.einsum("ij,ij->i", a, b)
    return np.stack([z_a, z_b, z_ab], axis=1)


def classical_upup_probability(z_ab):
    """Analytic P(up, up | z_ab) of the classical sign model.

    Hemispherical overlap of the two "up" half-spheres gives
    ``arccos(-z_ab) / (2 pi)``; used as the oracle against which the
    classical model's violation of constraint 3 is measured.
    """
    return np.arccos(-np.clip(np.asarray(z_ab, float), -1.0, 1.0)) / (2.0 * np.pi)


@dataclass
class ConstraintReport:
    """Binned Monte Carlo estimates of the three constraints.

    Deviations are maxima of absolute differences from the constraint
    targets; each carries a 3-sigma binomial error bar computed at the
    target probability.  Per-bin conditional data is kept so callers can
    inspect where constraint 3 fails.
    """

    n_samples: int
    bins: int
    dev_zab_uniform: float
    bar_zab_uniform: float
    dev_pair_uniform: float
    bar_pair_uniform: float
    dev_conditional: float
    bar_conditional: float
    bin_centers: np.ndarray = field(repr=False)
    conditional_dev_by_bin: np.ndarray = field(repr=False)
    conditional_bar_by_bin: np.ndarray = field(repr=False)
    bin_counts: np.ndarray = field(repr=False)

    @property
    def passes_zab_uniform(self) -> bool:
        return self.dev_zab_uniform <= self.bar_zab_uniform

    @property
    def passes_pair_uniform(self) -> bool:
        return self.dev_pair_uniform <= self.bar_pair_uniform

    @property
    def passes_conditional(self) -> bool:
        ok = self.conditional_dev_by_bin <= self.conditional_bar_by_bin
        return bool(np.all(ok | np.isnan(self.conditional_dev_by_bin)))

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "bins": self.bins,
            "zab_uniform": {
                "max_deviation": self.dev_zab_uniform,
                "three_sigma": self.bar_zab_uniform,
                "passes": self.passes_zab_uniform,
            },
            "pair_uniform": {
                "max_deviation": self.dev_pair_uniform,
                "three_sigma": self.bar_pair_uniform,
                "passes": self.passes_pair_uniform,
            },
            "conditional_upup": {
                "max_deviation": self.dev_conditional,
                "three_sigma": self.bar_conditional,
                "passes": self.passes_conditional,
                "bin_centers": self.bin_centers.tolist(),
                "deviation_by_bin": self.conditional_dev_by_bin.tolist(),
                "three_sigma_by_bin": self.conditional_bar_by_bin.tolist(),
            },
        }


def verify_marginals(sampler, rng: RandomStream, n: int, bins: int = 20) -> ConstraintReport:
    """Estimate the three constraints for ``sampler`` by binned Monte Carlo.

    ``sampler(rng, n)`` must return an ``(n, 3)`` array of triples
    ``[z_a, z_b, z_ab]``.  Requires ``n >= 10**4`` and ``10 <= bins <= 100``.
    """
    if n < 10_000:
        raise ValueError("need at least 1e4 samples")
    if not 10 <= bins <= 100:
        raise ValueError("bins must lie in [10, 100]")
    triples = np.asarray(sampler(rng, n), dtype=float)
    z_a, z_b, z_ab = triples[:, 0], triples[:, 1], triples[:, 2]

    edges = np.linspace(-1.0, 1.0, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = 2.0 / bins

    # constraint 1: density of z_ab flat at 1/2
    counts1 = np.histogram(z_ab, bins=edges)[0]
    dens1 = counts1 / (n * width)
    p1 = 1.0 / bins
    bar1 = 3.0 * np.sqrt(p1 * (1.0 - p1) / n) / width
    dev1 = float(np.abs(dens1 - 0.5).max())

    # constraint 2: pair density of (z_a, z_ab) flat at 1/4
    counts2 = np.histogram2d(z_a, z_ab, bins=[edges, edges])[0]
    dens2 = counts2 / (n * width * width)
    p2 = 1.0 / bins**2
    bar2 = 3.0 * np.sqrt(p2 * (1.0 - p2) / n) / width**2
    dev2 = float(np.abs(dens2 - 0.25).max())

    # constraint 3: P(up, up | z_ab bin) against (1 + center)/4
    kbin = np.clip(((z_ab + 1.0) / width).astype(np.int64), 0, bins - 1)
    upup = (z_a > 0.0) & (z_b > 0.0)
    nbin = np.bincount(kbin, minlength=bins).astype(float)
    nup = np.bincount(kbin[upup], minlength=bins).astype(float)
    target = (1.0 + centers) / 4.0
    with np.errstate(invalid="ignore", divide="ignore"):
        phat = np.where(nbin > 0, nup / np.where(nbin > 0, nbin, 1.0), np.nan)
    dev3_by_bin = np.abs(phat - target)
    bar3_by_bin = 3.0 * np.sqrt(target * (1.0 - target) / np.maximum(nbin, 1.0))
    dev3 = float(np.nanmax(dev3_by_bin))
    bar3 = float(np.nanmax(bar3_by_bin))

    return ConstraintReport(
        n_samples=n,
        bins=bins,
        dev_zab_uniform=dev1,
        bar_zab_uniform=float(bar1),
        dev_pair_uniform=dev2,
        bar_pair_uniform=float(bar2),
        dev_conditional=dev3,
        bar_conditional=bar3,
        bin_centers=centers,
        conditional_dev_by_bin=dev3_by_bin,
        conditional_bar_by_bin=bar3_by_bin,
        bin_counts=nbin.astype(np.int64),
    )
