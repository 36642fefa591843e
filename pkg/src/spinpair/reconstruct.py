"""Rebuild geometric relations from logbook statistics alone.

The logbook only ever relates marks across posts.  This module turns
those pair statistics into angle estimates under a chosen hypothesis,
tests whether the resulting cosine matrix is consistent with points on
one sphere (a rank <= 3 positive semidefinite Gram matrix), embeds all
marks of both posts on a single sphere by weighted stress minimization,
and reads off intra-post angles that were never directly measured.

Angle hypotheses:

* ``qm_sin2``  -- theta = 2 arcsin(sqrt(p)); the agreement probability
  grows as sin^2(theta/2).
* ``qm_cos2``  -- theta = 2 arccos(sqrt(p)); the complementary form.
* ``linear``   -- theta = pi p; what macroscopic spinning objects with
  well defined hemispheres would produce.

The embedding's output gauge is fixed ("pole-meridian-chirality": first
mark at the pole, second on the zero-azimuth meridian, third with
nonnegative y) so equal inputs give byte-equal outputs; all reported
physics is gauge invariant anyway.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .experiment import PairStats

__all__ = [
    "AngleMatrix",
    "EmbeddingSolution",
    "EmbeddabilityReport",
    "HYPOTHESES",
    "angles_from_stats",
    "embeddability_test",
    "sampled_noise_tolerance",
    "embed_on_sphere",
    "align_and_score",
    "intra_post_angles",
    "completed_cosine_matrix",
    "RankDeficientWarning",
]

HYPOTHESES = ("qm_sin2", "qm_cos2", "linear")


class RankDeficientWarning(UserWarning):
    """The observation pattern does not pin the geometry uniquely."""


@dataclass
class AngleMatrix:
    """Symmetric matrix of estimated angles over the merged mark set.

    Only masked entries carry data (cross-post pairs); ``counts`` holds
    per-entry trial counts used as stress weights.
    """

    ids: list[str]
    posts: list[str]  # "left"/"right" per mark
    angles: np.ndarray
    mask: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self, mark_id: str) -> int:
        return self.ids.index(mark_id)


def _invert_hypothesis(p: np.ndarray, hypothesis: str) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    if hypothesis == "qm_sin2":
        return 2.0 * np.arcsin(np.sqrt(p))
    if hypothesis == "qm_cos2":
        return 2.0 * np.arccos(np.sqrt(p))
    if hypothesis == "linear":
        return np.pi * p
    raise ValueError(f"unknown hypothesis {hypothesis!r}")


def angles_from_stats(stats: PairStats, hypothesis: str = "qm_sin2") -> AngleMatrix:
    """Convert pair statistics to a (masked) cross-post angle matrix."""
    lefts = sorted({l for l, _ in stats})
    rights = sorted({r for _, r in stats})
    ids = lefts + rights
    posts = ["left"] * len(lefts) + ["right"] * len(rights)
    n = len(ids)
    angles = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    counts = np.zeros((n, n))
    col = {m: k for k, m in enumerate(ids)}
    for (l, r), (cnt, p) in stats.items():
        if not 0.0 <= p <= 1.0:
            raise ValueError("p_hat outside [0, 1]")
        th = float(_invert_hypothesis(np.asarray(p), hypothesis))
        i, j = col[l], col[r]
        angles[i, j] = angles[j, i] = th
        mask[i, j] = mask[j, i] = True
        counts[i, j] = counts[j, i] = cnt
    return AngleMatrix(ids=ids, posts=posts, angles=angles, mask=mask, counts=counts)


@dataclass
class EmbeddabilityReport:
    """Spectral test of sphere embeddability of a cosine matrix."""

    eigenvalues: np.ndarray  # descending
    psd_ok: bool
    rank3_ok: bool
    tol_psd: float
    tol_rank: float

    @property
    def embeddable(self) -> bool:
        return self.psd_ok and self.rank3_ok

    @property
    def lambda4(self) -> float:
        return float(self.eigenvalues[3]) if len(self.eigenvalues) > 3 else 0.0


def sampled_noise_tolerance(n_marks: int, min_trials: int) -> float:
    """Spectral tolerance for cosine matrices estimated from finite trials.

    A cosine entry estimated from n trials carries standard error at
    most 1/sqrt(n); the spectral norm of an n_marks x n_marks symmetric
    noise matrix is then of order sqrt(n_marks)/sqrt(n), and three of
    those make the 3-sigma tolerance.
    """
    return 3.0 * np.sqrt(n_marks / min_trials)


def embeddability_test(cos_matrix: np.ndarray, tol: float | None = None) -> EmbeddabilityReport:
    """Eigendecompose a full cosine matrix and return PSD / rank-3 verdicts.

    ``tol`` defaults to ``1e-6 * n`` (exact inputs); pass
    :func:`sampled_noise_tolerance` for sampled inputs.
    """
    c = np.asarray(cos_matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cosine matrix must be square")
    if not np.allclose(c, c.T, atol=1e-12):
        raise ValueError("cosine matrix must be symmetric")
    if np.abs(np.diag(c) - 1.0).max() > 1e-9:
        raise ValueError("diagonal must be 1")
    if np.abs(c).max() > 1.0 + 1e-9:
        raise ValueError("entries must lie in [-1, 1]")
    n = c.shape[0]
    if tol is None:
        tol = 1e-6 * n
    ev = np.linalg.eigvalsh(c)[::-1]
    psd_ok = bool(ev[-1] >= -tol)
    rank3_ok = bool(ev[3] <= tol) if n > 3 else True
    return EmbeddabilityReport(
        eigenvalues=ev, psd_ok=psd_ok, rank3_ok=rank3_ok, tol_psd=tol, tol_rank=tol
    )


@dataclass
class EmbeddingSolution:
    """Unit vectors per mark id, with convergence and rigidity metadata."""

    ids: list[str]
    posts: list[str]
    vectors: np.ndarray  # (n, 3), unit rows
    stress: float
    iterations: int
    gauge: str = "pole-meridian-chirality"
    rank_deficient: bool = False
    warnings: list[str] = field(default_factory=list)

    def vector(self, mark_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(mark_id)]

    def to_dict(self) -> dict:
        return {
            "marks": [
                {
                    "id": i,
                    "post": p,
                    "x": float(v[0]),
                    "y": float(v[1]),
                    "z": float(v[2]),
                }
                for i, p, v in zip(self.ids, self.posts, self.vectors)
            ],
            "stress": self.stress,
            "iterations": self.iterations,
            "gauge": self.gauge,
            "rank_deficient": self.rank_deficient,
        }


def _connected_components(mask: np.ndarray) -> list[list[int]]:
    n = mask.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.where(mask[v])[0]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        comps.append(sorted(comp))
    return comps


def _spectral_init(cosines: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Top-3 eigenvector initialization of the masked-completed matrix.

    Missing entries are zero-filled, the diagonal set to one.
    Eigenvector signs are fixed by their first nonzero component so the
    initialization is deterministic.
    """
    n = cosines.shape[0]
    c = np.where(mask, cosines, 0.0)
    np.fill_diagonal(c, 1.0)
    vals, vecs = np.linalg.eigh(c)
    order = np.argsort(vals)[::-1][: min(3, n)]
    basis = np.zeros((n, 3))
    basis[:, : len(order)] = vecs[:, order] * np.sqrt(np.maximum(vals[order], 1e-12))
    for k in range(basis.shape[1]):
        col = basis[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if len(nz) and col[nz[0]] < 0:
            basis[:, k] = -col
    norms = np.linalg.norm(basis, axis=1)
    bad = norms < 1e-12
    basis[bad] = np.array([0.0, 0.0, 1.0])
    norms[bad] = 1.0
    return basis / norms[:, None]


def _stress_and_grad(x, cosines, mask, wts):
    g = x @ x.T
    diff = np.where(mask, g - cosines, 0.0) * wts
    stress = float((diff * np.where(mask, g - cosines, 0.0)).sum())
    grad = 4.0 * diff @ x
    return stress, grad


def _apply_gauge(x: np.ndarray) -> np.ndarray:
    """Rotate/reflect to the pole-meridian-chirality gauge."""
    x = x.copy()
    n = x.shape[0]
    # first mark to +z
    v0 = x[0]
    target = np.array([0.0, 0.0, 1.0])
    v = np.cross(v0, target)
    c = float(v0 @ target)
    if np.linalg.norm(v) > 1e-12:
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        R = np.eye(3) + vx + vx @ vx / (1.0 + c)
        x = x @ R.T
    elif c < 0:
        x = x @ np.diag([1.0, -1.0, -1.0])
    # second mark to zero azimuth
    if n > 1:
        vxy = x[1][:2]
        r = np.linalg.norm(vxy)
        if r > 1e-12:
            ca, sa = vxy[0] / r, vxy[1] / r
            Rz = np.array([[ca, sa, 0.0], [-sa, ca, 0.0], [0.0, 0.0, 1.0]])
            x = x @ Rz.T
    # chirality from the third mark
    if n > 2 and x[2][1] < -1e-12:
        x[:, 1] = -x[:, 1]
    return x


def embed_on_sphere(
    angles: AngleMatrix, max_iter: int = 5000, tol: float = 1e-14
) -> EmbeddingSolution:
    """Embed all marks on one sphere by weighted stress minimization.

    Minimizes ``sum_observed w_ij (x_i . x_j - cos(theta_ij))^2`` over
    unit vectors with projected gradient descent and backtracking line
    search from a deterministic spectral initialization.  Raises
    ``ValueError`` if the observation graph is disconnected (the
    relative placement of the components would be arbitrary).
    """
    n = angles.n
    mask = angles.mask
    comps = _connected_components(mask | np.eye(n, dtype=bool))
    if len(comps) > 1:
        names = [[angles.ids[i] for i in comp] for comp in comps]
        raise ValueError(f"observation graph is disconnected: components {names}")

    cosines = np.cos(angles.angles)
    wts = np.where(angles.counts > 0, angles.counts, 1.0) * mask
    x = _spectral_init(cosines, mask)

    stress, grad = _stress_and_grad(x, cosines, mask, wts)
    step = 1.0 / max(wts.sum(), 1.0)
    iters = 0
    for iters in range(1, max_iter + 1):
        # project gradient on the tangent space of each sphere
        tang = grad - (np.einsum("ij,ij->i", grad, x))[:, None] * x
        gnorm2 = float((tang * tang).sum())
        if gnorm2 <= 1e-300:
            break
        improved = False
        s = step
        for _ in range(60):
            xn = x - s * tang
            xn /= np.linalg.norm(xn, axis=1)[:, None]
            sn, gn = _stress_and_grad(xn, cosines, mask, wts)
            if sn < stress - 1e-4 * s * gnorm2:
                improved = True
                break
            s *= 0.5
        if not improved:
            break
        drop = stress - sn
        x, stress, grad = xn, sn, gn
        step = min(s * 2.0, 1e6)
        if drop < tol:
            break

    x = _apply_gauge(x)
    stress, _ = _stress_and_grad(x, cosines, mask, wts)

    # rigidity: a post with several marks needs >= 3 observed partners
    warns = []
    rank_deficient = False
    for side in ("left", "right"):
        own = [i for i, p in enumerate(angles.posts) if p == side]
        if len(own) < 2:
            continue
        partners = set()
        for i in own:
            partners.update(np.where(mask[i])[0].tolist())
        partners -= set(own)
        if len(partners) < 3:
            rank_deficient = True
            warns.append(
                f"{side} post geometry underdetermined: only {len(partners)} "
                "opposite-post partner(s) observed"
            )
    sol = EmbeddingSolution(
        ids=list(angles.ids),
        posts=list(angles.posts),
        vectors=x,
        stress=stress,
        iterations=iters,
        rank_deficient=rank_deficient,
        warnings=warns,
    )
    return sol


def align_and_score(solution: EmbeddingSolution, truth: dict[str, "np.ndarray"]) -> dict:
    """Remove the gauge freedom and report angular errors against truth.

    Finds the orthogonal transform (rotation or roto-reflection)
    minimizing total squared chordal distance, then reports the mean and
    maximum angle between transformed solution vectors and the truth.
    """
    if set(truth) != set(solution.ids):
        raise ValueError("truth ids differ from solution ids")
    x = solution.vectors
    y = np.stack([np.asarray(truth[i], dtype=float) for i in solution.ids])
    y = y / np.linalg.norm(y, axis=1)[:, None]
    m = y.T @ x
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    xr = x @ r.T
    dots = np.clip(np.einsum("ij,ij->i", xr, y), -1.0, 1.0)
    errs = np.arccos(dots)
    return {
        "mean_error": float(errs.mean()),
        "max_error": float(errs.max()),
        "per_mark": {i: float(e) for i, e in zip(solution.ids, errs)},
    }


def intra_post_angles(solution: EmbeddingSolution, side: str) -> tuple[list[str], np.ndarray]:
    """Angles between same-post marks, read off the embedding.

    These are quantities the logbook never measures directly.  Emits
    :class:`RankDeficientWarning` if the embedding flagged the geometry
    as underdetermined.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if solution.rank_deficient:
        warnings.warn(
            "; ".join(solution.warnings) or "embedding is rank deficient",
            RankDeficientWarning,
            stacklevel=2,
        )
    idx = [i for i, p in enumerate(solution.posts) if p == side]
    ids = [solution.ids[i] for i in idx]
    v = solution.vectors[idx]
    g = np.clip(v @ v.T, -1.0, 1.0)
    th = np.arccos(g)
    np.fill_diagonal(th, 0.0)
    return ids, th


def completed_cosine_matrix(angles: AngleMatrix, solution: EmbeddingSolution) -> np.ndarray:
    """Full cosine matrix: observed entries from data, the rest from the embedding.

    This is the matrix whose spectrum discriminates angle hypotheses: a
    wrong hypothesis leaves observed cross-post entries that no rank-3
    completion can reconcile.
    """
    if angles.ids != solution.ids:
        raise ValueError("angle matrix and solution index different marks")
    g = solution.vectors @ solution.vectors.T
    c = np.where(angles.mask, np.cos(angles.angles), g)
    np.fill_diagonal(c, 1.0)
    return np.clip(c, -1.0, 1.0)
