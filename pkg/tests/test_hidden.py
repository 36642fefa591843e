import math

import numpy as np
import pytest

from spinpair.geometry import RandomStream
from spinpair.hidden import (
    HiddenTriple,
    classical_density,
    classical_triples,
    classical_upup_probability,
    factorized_triples,
    sample_factorized,
    support_determinant,
    tetra_branches,
    tetra_sample,
    tetra_sample_batch,
    tetra_triples,
    triangle_bounds,
    verify_marginals,
)

CHI2_99_DF19 = 36.191


def upup_bin_average(edges):
    """Exact bin average of the classical P(up,up | z_ab) oracle."""

    def prim(u):
        u = np.clip(u, -1.0, 1.0)
        return u * np.arccos(-u) + np.sqrt(np.maximum(0.0, 1.0 - u * u))

    lo, hi = edges[:-1], edges[1:]
    return (prim(hi) - prim(lo)) / (hi - lo) / (2.0 * np.pi)


class TestHiddenTriple:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            HiddenTriple(1.5, 0.0, 0.0)


class TestClassicalDensity:
    def test_center_value(self):
        # normalized joint density of three isotropic inner products
        assert classical_density(0.0, 0.0, 0.0) == pytest.approx(1.0 / (4.0 * math.pi))

    def test_outside_support(self):
        assert classical_density(1.0, 1.0, 0.0) == 0.0

    def test_symmetric_point(self):
        expected = 1.0 / (4.0 * math.pi * math.sqrt(0.5))
        assert classical_density(0.5, 0.5, 0.5) == pytest.approx(expected)

    def test_monte_carlo_cell(self):
        # histogram of sampled triples reproduces the density at one cell
        from spinpair.geometry import split_stream

        root = RandomStream(35)
        hits = 0
        n_total = 6_000_000
        for k in range(3):  # chunked to bound memory
            tr = classical_triples(split_stream(root, k), 2_000_000)
            hits += int(np.all(np.abs(tr - 0.5) <= 0.05, axis=1).sum())
        dens = hits / n_total / 0.1**3
        assert dens == pytest.approx(1.0 / (4.0 * math.pi * math.sqrt(0.5)), rel=0.05)

    def test_normalization_midpoint(self):
        # the inverse-square-root edge singularity is integrable
        n = 200
        e = np.linspace(-1.0, 1.0, n + 1)
        c = 0.5 * (e[:-1] + e[1:])
        total = 0.0
        for u in c:  # slab at a time to bound memory
            s, t = np.meshgrid(c, c, indexing="ij")
            total += classical_density(s, t, u).sum() * (2.0 / n) ** 3
        assert total == pytest.approx(1.0, abs=0.01)

    def test_double_sign_flip_invariance(self):
        rng = np.random.default_rng(5)
        s, t, u = rng.uniform(-1, 1, (3, 1000))
        assert np.array_equal(
            classical_density(s, t, u), classical_density(s, -t, -u)
        )


class TestTriangleBounds:
    def test_right_angles(self):
        assert triangle_bounds(math.pi / 2, math.pi / 2) == (0.0, math.pi)

    def test_generic(self):
        lo, hi = triangle_bounds(math.pi / 3, math.pi / 6)
        assert lo == pytest.approx(math.pi / 6)
        assert hi == pytest.approx(math.pi / 2)

    def test_obtuse_pair_uses_sum_cap(self):
        # the upper bound must include the 2 pi - a1 - a2 branch: the
        # naive sum 4 pi / 3 exceeds pi and is not the support edge
        lo, hi = triangle_bounds(2 * math.pi / 3, 2 * math.pi / 3)
        assert lo == 0.0
        assert hi == pytest.approx(2 * math.pi / 3)

    def test_bounds_match_density_support(self):
        # half-offset angle grid never lands exactly on the boundary
        n = 50
        alpha = (np.arange(n) + 0.5) * math.pi / n
        a1 = alpha[:, None, None]
        a2 = alpha[None, :, None]
        a3 = alpha[None, None, :]
        dens_pos = support_determinant(np.cos(a1), np.cos(a2), np.cos(a3)) > 0
        lo = np.abs(a1 - a2)
        hi = np.minimum(a1 + a2, 2 * math.pi - a1 - a2)
        inside = (a3 > lo) & (a3 < hi)
        assert np.array_equal(dens_pos, np.broadcast_to(inside, dens_pos.shape))


class TestTetraBranches:
    def test_generic_two_candidates(self):
        assert sorted(tetra_branches(0.3, 0.5)) == pytest.approx([-0.2, 0.8])

    def test_generic_other(self):
        assert sorted(tetra_branches(0.9, 0.5)) == pytest.approx([0.4, 0.6])

    def test_double_root_collapses(self):
        assert tetra_branches(0.0, 1.0) == [0.0]

    def test_always_one_or_two(self):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            z_a, z_ab = rng.uniform(-1, 1, 2)
            assert len(tetra_branches(z_a, z_ab)) in (1, 2)

    def test_plane_membership(self):
        # every sampled triple satisfies exactly one of the four plane
        # relations to 1e-12 (generic points lie on a single face)
        rng = np.random.default_rng(12)
        for _ in range(2000):
            z_a, z_ab = rng.uniform(-1, 1, 2)
            for z_b in tetra_branches(z_a, z_ab):
                residuals = [
                    abs(z_a + z_b + z_ab + 1.0),
                    abs(z_a - z_b - z_ab + 1.0),
                    abs(z_a + z_b - z_ab - 1.0),
                    abs(z_a - z_b + z_ab - 1.0),
                ]
                assert sum(r <= 1e-12 for r in residuals) == 1


class TestTetraSample:
    def test_perfect_correlation(self):
        rng = RandomStream(8)
        for _ in range(200):
            z_a, z_b = tetra_sample(1.0, rng)
            assert z_b == pytest.approx(z_a, abs=1e-12)

    def test_perfect_anticorrelation(self):
        rng = RandomStream(8)
        for _ in range(200):
            z_a, z_b = tetra_sample(-1.0, rng)
            assert z_b == pytest.approx(-z_a, abs=1e-12)

    def test_quadrant_fraction_at_zero(self):
        # P(up, up | z_ab = 0) = 1/4
        z_a, z_b = tetra_sample_batch(np.zeros(1_000_000), RandomStream(21))
        frac = ((z_a > 0) & (z_b > 0)).mean()
        assert frac == pytest.approx(0.25, abs=0.0015)

    def test_z_a_uniform_chi2(self):
        # operational locality: z_a histogram flat at every fixed z_ab
        for z_ab, seed in ((0.3, 22), (-0.7, 23)):
            z_a, _ = tetra_sample_batch(np.full(1_000_000, z_ab), RandomStream(seed))
            counts = np.histogram(z_a, bins=np.linspace(-1, 1, 21))[0]
            expected = 1_000_000 / 20
            chi2 = ((counts - expected) ** 2 / expected).sum()
            assert chi2 <= CHI2_99_DF19

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            tetra_sample(1.5, RandomStream(1))


class TestFactorized:
    def test_marginals_uniform_ks(self):
        tr = factorized_triples(RandomStream(77), 100_000)
        n = tr.shape[0]
        for col in range(3):
            z = np.sort(tr[:, col])
            grid = np.arange(1, n + 1) / n
            cdf = (z + 1.0) / 2.0
            d_stat = max(np.abs(grid - cdf).max(), np.abs(grid - 1 / n - cdf).max())
            assert d_stat <= 1.63 / math.sqrt(n)

    def test_outside_classical_support_fraction(self):
        # oracle: elliptope volume integral, computed numerically from
        # the exact per-(s, t) allowed u-interval length
        n = 2000
        c = (np.arange(n) + 0.5) * 2.0 / n - 1.0
        s, t = np.meshgrid(c, c, indexing="ij")
        interval = 2.0 * np.sqrt((1 - s * s) * (1 - t * t))
        inside_volume = interval.sum() * (2.0 / n) ** 2
        expected_outside = 1.0 - inside_volume / 8.0
        assert expected_outside == pytest.approx(1.0 - math.pi**2 / 16.0, abs=1e-4)

        tr = factorized_triples(RandomStream(99), 1_000_000)
        frac = (support_determinant(tr[:, 0], tr[:, 1], tr[:, 2]) <= 0).mean()
        assert frac == pytest.approx(expected_outside, abs=0.005)

    def test_conditional_breaks_agreement_constraint(self):
        # P(up, up | z_ab ~ 0.8) stays at 1/4 instead of 0.45
        tr = factorized_triples(RandomStream(100), 1_000_000)
        win = np.abs(tr[:, 2] - 0.8) <= 0.02
        p = ((tr[win, 0] > 0) & (tr[win, 1] > 0)).mean()
        assert abs(p - 0.45) == pytest.approx(0.20, abs=0.01)

    def test_scalar_form(self):
        t = sample_factorized(RandomStream(1))
        assert isinstance(t, HiddenTriple)


class TestVerifyMarginals:
    def test_tetra_passes_all_three(self):
        rep = verify_marginals(tetra_triples, RandomStream(2), 1_000_000, bins=20)
        assert rep.passes_zab_uniform
        assert rep.passes_pair_uniform
        assert rep.passes_conditional

    def test_factorized_fails_conditional_only(self):
        rep = verify_marginals(factorized_triples, RandomStream(7), 1_000_000, bins=20)
        assert rep.passes_zab_uniform
        assert rep.passes_pair_uniform
        assert not rep.passes_conditional
        edge_bins = [0, 1, 18, 19]  # centers -0.95, -0.85, 0.85, 0.95
        assert rep.conditional_dev_by_bin[edge_bins].min() >= 0.15

    def test_classical_fails_conditional_per_oracle(self):
        rep = verify_marginals(classical_triples, RandomStream(2), 1_000_000, bins=20)
        assert rep.passes_zab_uniform
        assert rep.passes_pair_uniform
        assert not rep.passes_conditional
        edges = np.linspace(-1.0, 1.0, 21)
        oracle = upup_bin_average(edges)
        target = (1.0 + rep.bin_centers) / 4.0
        sigma = np.sqrt(oracle * (1 - oracle) / np.maximum(rep.bin_counts, 1))
        assert np.all(
            np.abs(rep.conditional_dev_by_bin - np.abs(oracle - target)) <= 3 * sigma
        )

    def test_classical_windowed_deviation_near_half(self):
        # |P(up,up) - (1 + z_ab)/4| at z_ab = 0.5 is 0.375 - 1/3 = 1/24
        tr = classical_triples(RandomStream(12345), 2_000_000)
        win = np.abs(tr[:, 2] - 0.5) <= 0.05
        p = ((tr[win, 0] > 0) & (tr[win, 1] > 0)).mean()
        assert abs(p - 0.375) == pytest.approx(1.0 / 24.0, abs=0.005)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            verify_marginals(tetra_triples, RandomStream(1), 100)
        with pytest.raises(ValueError):
            verify_marginals(tetra_triples, RandomStream(1), 20_000, bins=200)

    def test_oracle_matches_windowed_probability(self):
        # hemispherical overlap formula against direct geometry
        assert classical_upup_probability(0.5) == pytest.approx(1.0 / 3.0)
        assert classical_upup_probability(1.0) == pytest.approx(0.5)
        assert classical_upup_probability(-1.0) == pytest.approx(0.0)
