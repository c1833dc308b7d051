import csv
import math

import numpy as np
import pytest

from beta_spectra.potential import (
    ParameterError,
    PotentialShape,
    RangeError,
    compute_constants,
    solve_energy_for_beta,
)
from beta_spectra.sde import (
    SDE_COLUMNS,
    NoiseBundle,
    RefineGridError,
    carousel_atoms,
    carousel_mesh,
    carousel_time_change,
    counting_from_phase,
    inverse_time_change,
    level_crossings,
    sample_carousel_noise,
    sample_noise,
    schtau_atoms,
    sde_rows,
    simulate_carousel,
    simulate_schtau,
    simulate_sine_beta,
    sine_beta_min_horizon,
    write_sde_csv,
)
from beta_spectra.stats import ks_distance

SHAPE = PotentialShape(1)
CONSTS = compute_constants(SHAPE, 1.0)
E_BETA2 = solve_energy_for_beta(SHAPE, 2.0)
CONSTS_BETA2 = compute_constants(SHAPE, E_BETA2)


def chunked_ends(make_noise, simulate, total=10 ** 4, size=1000):
    """Endpoints of ``total`` paths, simulated ``size`` at a time to bound memory."""
    return np.concatenate([simulate(make_noise(i, size))[0].psi_end
                           for i in range(total // size)])


def silent(noise):
    z = np.zeros_like(noise.z_re)
    return NoiseBundle(noise.dt, z, z.copy(), None if noise.b is None else z.copy())


class TestNoise:
    def test_shapes_and_cover(self):
        nb = sample_noise(0, 1.0, 0.003, n_paths=5)
        assert nb.z_re.shape == (334, 5) and nb.b.shape == (334, 5)
        assert nb.mesh[-1] == pytest.approx(1.0, abs=1e-12)
        assert nb.n_paths == 5

    def test_variance(self):
        nb = sample_noise(1, 100.0, 0.01, n_paths=100)
        for arr in (nb.z_re, nb.z_im, nb.b):
            assert np.var(arr) / 0.01 == pytest.approx(1.0, rel=0.02)
        assert abs(np.corrcoef(nb.z_re.ravel(), nb.z_im.ravel())[0, 1]) < 0.01

    def test_carousel_mesh(self):
        mesh = carousel_mesh(1e-3, 1e-4)
        assert mesh[0] == 0 and mesh[-1] == pytest.approx(1 - 1e-4, abs=1e-15)
        steps = np.diff(mesh)
        assert np.all(steps[:-1] <= 1e-3 * (1 - mesh[:-2]) * (1 + 1e-9))
        with pytest.raises(ParameterError):
            carousel_mesh(1e-3, 0.5)


class TestSchtau:
    def test_noise_off(self):
        nb = silent(sample_noise(0, 1.0, 0.01))
        cs = [-1.0, 0.0, 2.5]
        paths = simulate_schtau(CONSTS, cs, nb)
        for c, p in zip(cs, paths):
            assert p.psi[0] == 0
            assert p.psi_end == pytest.approx(2 * c + CONSTS.schtau_drift, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ParameterError):
            simulate_schtau(CONSTS, [], sample_noise(0, 1.0, 0.01))

    def test_monotone_in_c(self):
        nb = sample_noise(3, 1.0, 1e-3, n_paths=1000)
        cs = np.linspace(-3, 3, 25)
        ends = np.array([p.psi_end for p in simulate_schtau(CONSTS, cs, nb)])
        assert np.count_nonzero(np.diff(ends, axis=0) < 0) == 0

    def test_variance_bound(self):
        end = chunked_ends(lambda i, n: sample_noise((4, i), 1.0, 1e-3, n_paths=n),
                           lambda nb: simulate_schtau(CONSTS, [0.7], nb))
        bound = (CONSTS.C_E0 / 2 + CONSTS.C_0) / CONSTS.E0
        # Ito isometry gives equality; allow sampling error of the variance estimate
        assert np.var(end, ddof=1) <= bound * (1 + 4 * math.sqrt(2 / 10 ** 4))

    def test_atoms_noise_off(self):
        nb = silent(sample_noise(0, 1.0, 0.01))
        cs = np.linspace(-6, 6, 241)
        paths = simulate_schtau(CONSTS, cs, nb)
        beta = 0.4
        atoms = schtau_atoms(paths, beta)
        d0 = CONSTS.schtau_drift
        n = np.arange(-10, 11)
        expect = (2 * n * math.pi - 2 * beta - d0) / 2
        expect = expect[(expect >= -6) & (expect <= 6)]
        assert np.allclose(atoms, expect, atol=1e-9)

    def test_atoms_clock(self):
        cs = np.linspace(-7, 7, 141)
        p = [type(q)(q.kind, q.parameter, q.mesh, np.array([0.0, 2 * q.parameter]))
             for q in simulate_schtau(CONSTS, cs, silent(sample_noise(0, 1.0, 0.5)))]
        assert np.allclose(schtau_atoms(p, 0.0), math.pi * np.arange(-2, 3), atol=1e-9)

    def test_mean_gap(self):
        cs = np.linspace(-6, 6, 121)
        gaps = []
        for chunk in range(10):
            nb = sample_noise(100 + chunk, 1.0, 1e-3, n_paths=1000)
            paths = simulate_schtau(CONSTS, cs, nb)
            for j in range(1000):
                gaps.append(np.diff(schtau_atoms(paths, 0.0, path_index=j)))
        g = np.concatenate(gaps)
        se = g.std(ddof=1) / math.sqrt(g.size)
        assert abs(g.mean() - math.pi) <= max(3 * se, 0.02 * math.pi)

    def test_refine_grid_error(self):
        with pytest.raises(RefineGridError):
            level_crossings([0, 1, 2], [0.0, 2.0, 1.0], [0.5])


class TestCarousel:
    def test_zero_fixed_point(self):
        nb = sample_carousel_noise(0, 1e-3, 1e-4, n_paths=20)
        p = simulate_carousel(CONSTS.D_E0, [0.0], nb, record=True)[0]
        assert np.all(p.psi == 0.0)

    def test_noise_off(self):
        nb = silent(sample_carousel_noise(0, 1e-3, 1e-4))
        for p in simulate_carousel(CONSTS.D_E0, [0.5, 3.0], nb):
            assert p.psi_end == pytest.approx(2 * p.parameter * (1 - 1e-4), abs=1e-12)
            assert p.t_end < 1

    def test_bad_cutoff(self):
        nb = sample_carousel_noise(0, 1e-3, 1e-4)
        with pytest.raises(ParameterError):
            simulate_carousel(1.0, [1.0], nb, delta_cutoff=0.2)

    def test_monotone_in_lambda(self):
        nb = sample_carousel_noise(1, 1e-3, 1e-4, n_paths=1000)
        lams = np.linspace(0, 12, 49)
        ends = np.array([p.psi_end for p in simulate_carousel(CONSTS_BETA2.D_E0, lams, nb)])
        assert np.count_nonzero(np.diff(ends, axis=0) < 0) == 0

    def test_mean_count(self):
        lam = 4 * math.pi
        end = chunked_ends(lambda i, n: sample_carousel_noise((7, i), 1e-3, 1e-4, n_paths=n),
                           lambda nb: simulate_carousel(CONSTS_BETA2.D_E0, [lam], nb))
        n, _ = counting_from_phase(end)
        se = n.std(ddof=1) / math.sqrt(n.size)
        assert abs(n.mean() - 4.0) <= 0.05 * 4.0
        assert abs(n.mean() - 4.0) <= 3 * se

    def test_atoms_noise_off(self):
        nb = silent(sample_carousel_noise(0, 1e-2, 1e-4))
        lams = np.linspace(0, 10, 101)
        atoms = carousel_atoms(simulate_carousel(1.0, lams, nb))
        expect = math.pi * np.array([1, 3, 5]) / (2 * (1 - 1e-4))
        assert np.allclose(atoms, expect, atol=1e-9)

    def test_scheme_convergence(self):
        lam = 4 * math.pi
        counts = []
        for h0, seed in [(1e-3, 11), (5e-4, 12)]:
            end = chunked_ends(
                lambda i, n: sample_carousel_noise((seed, i), h0, 1e-4, n_paths=n),
                lambda nb: simulate_carousel(CONSTS_BETA2.D_E0, [lam], nb))
            counts.append(counting_from_phase(end)[0])
        assert ks_distance(*counts) <= 0.02


class TestSineBeta:
    def test_zero_fixed_point(self):
        nb = sample_noise(0, 30.0, 0.01, n_paths=10, with_b=False)
        p = simulate_sine_beta(2.0, [0.0], nb, record=True)[0]
        assert np.all(p.psi == 0.0)

    def test_noise_off(self):
        nb = silent(sample_noise(0, 30.0, 1e-3, with_b=False))
        p = simulate_sine_beta(2.0, [5.0], nb)[0]
        # left-point Euler for exp(-t/2) integrates to (1 - e^{-T/2}) up to O(step)
        assert p.psi_end == pytest.approx(5.0 * (1 - math.exp(-15.0)), rel=1e-3)

    def test_horizon_error(self):
        nb = sample_noise(0, 5.0, 0.01, with_b=False)
        need = sine_beta_min_horizon(2.0)
        with pytest.raises(ParameterError, match=f"{need:g}"):
            simulate_sine_beta(2.0, [1.0], nb, horizon=5.0)
        assert 0.5 * math.exp(-need / 2) == pytest.approx(1e-6)

    def test_monotone(self):
        nb = sample_noise(2, sine_beta_min_horizon(2.0) + 1, 2e-3, n_paths=1000, with_b=False)
        lams = np.linspace(0, 20, 41)
        ends = np.array([p.psi_end for p in simulate_sine_beta(2.0, lams, nb)])
        assert np.count_nonzero(np.diff(ends, axis=0) < 0) == 0

    def test_stabilizes_near_lattice(self):
        horizon = sine_beta_min_horizon(2.0) + 1
        end = chunked_ends(
            lambda i, n: sample_noise((5, i), horizon, 1e-3, n_paths=n, with_b=False),
            lambda nb: simulate_sine_beta(2.0, [10.0], nb))
        _, resid = counting_from_phase(end)
        assert np.mean(resid <= 0.3) >= 0.95


class TestTimeChange:
    def test_examples(self):
        assert carousel_time_change(0.0, 2.0) == 0.0
        assert carousel_time_change(1 - math.exp(-1), 2.0) == pytest.approx(2.0, abs=1e-14)

    @pytest.mark.parametrize("t", [0.0, 0.3, 0.9, 0.9999])
    def test_round_trip(self, t):
        assert abs(inverse_time_change(carousel_time_change(t, 2.7), 2.7) - t) <= 1e-14

    def test_range(self):
        with pytest.raises(RangeError):
            carousel_time_change(1.0, 2.0)


class TestCounting:
    def test_examples(self):
        assert counting_from_phase(0.0) == (0, 0.0)
        n, r = counting_from_phase(4 * math.pi + 0.05)
        assert n == 2 and r == pytest.approx(0.05)

    def test_vector(self):
        n, r = counting_from_phase(np.array([0.1, 6.0, -6.5]))
        assert list(n) == [0, 1, -1]
        assert r.shape == (3,)


def test_csv(tmp_path):
    nb = sample_carousel_noise(0, 1e-2, 1e-4, n_paths=3)
    paths = simulate_carousel(1.0, [0.5, 1.5], nb)
    rows = sde_rows(paths, ["s0", "s1", "s2"])
    write_sde_csv(tmp_path / "sde.csv", rows)
    got = list(csv.DictReader(open(tmp_path / "sde.csv")))
    assert list(got[0]) == SDE_COLUMNS
    assert len(got) == 6
    assert {r["kind"] for r in got} == {"carousel"}
