import unittest
from unittest.mock import MagicMock

import numpy as np
import scipy.sparse

from dgieti.assembly import assemble_all
from dgieti.exceptions import DimensionError, FactorizationError, OracleSizeError
from dgieti.geometry import Side, box_grid
from dgieti.linalg import is_symmetric
from dgieti.schur import (
    PatchSchur, build_schur, harmonic_extension_a, harmonic_extension_e, harmonic_extension_ratios, schur_apply,
)


def floating_pair(degree=1, levels=2):
    """Two patches where only the west side of patch 0 is Dirichlet, so patch 1 floats."""
    return box_grid(2, 1, degree, levels=levels, dirichlet=[Side(0, "west")])


class TestPatchSchur(unittest.TestCase):
    def setUp(self):
        self.systems = assemble_all(floating_pair())
        self.floating = build_schur(self.systems[1])
        self.rng = np.random.default_rng(0)

    def test_constants_in_kernel(self):
        np.testing.assert_allclose(schur_apply(self.floating, np.ones(self.floating.n_boundary)), 0.0, atol=1e-10)

    def test_energy_identity(self):
        ps = build_schur(self.systems[0])
        u = self.rng.standard_normal(ps.n_boundary)
        w = ps.assemble_local(harmonic_extension_e(ps, u), u)
        self.assertAlmostEqual(u @ ps.apply(u) / ps.energy_e(w), 1.0, places=10)

    def test_matches_dense_elimination(self):
        ps = build_schur(self.systems[0])
        K = self.systems[0].K.toarray()
        n = ps.n_interior
        expected = K[n:, n:] - K[n:, :n] @ np.linalg.solve(K[:n, :n], K[:n, n:])
        np.testing.assert_allclose(ps.dense_schur(), expected, atol=1e-9 * np.abs(expected).max())
        u = self.rng.standard_normal(ps.n_boundary)
        np.testing.assert_allclose(ps.apply(u), expected @ u, atol=1e-9 * np.abs(expected).max())

    def test_symmetric(self):
        ps = self.floating
        u, v = self.rng.standard_normal((2, ps.n_boundary))
        self.assertAlmostEqual(v @ ps.apply(u), u @ ps.apply(v), places=9)
        self.assertTrue(is_symmetric(ps.dense_schur(), tol=1e-10))

    def test_harmonic_extension_minimizes_energy(self):
        ps = build_schur(self.systems[0])
        u = self.rng.standard_normal(ps.n_boundary)
        w_I = ps.extend_e(u)
        residual = ps.K_II @ w_I + ps.K_IB @ u
        self.assertLess(np.linalg.norm(residual), 1e-10 * np.linalg.norm(ps.K_IB @ u))
        best = ps.energy_e(ps.assemble_local(w_I, u))
        for _ in range(5):
            other = w_I + 1e-2 * self.rng.standard_normal(w_I.size)
            self.assertGreater(ps.energy_e(ps.assemble_local(other, u)), best)

    def test_interior_solution(self):
        ps = build_schur(self.systems[0])
        u = self.rng.standard_normal(ps.n_boundary)
        np.testing.assert_allclose(ps.interior_solution(u), ps.extend_e(u))
        f_I = self.rng.standard_normal(ps.n_interior)
        w = ps.interior_solution(u, f_I)
        np.testing.assert_allclose(ps.K_II @ w + ps.K_IB @ u, f_I, atol=1e-10)

    def test_interior_block_has_no_interface_terms(self):
        system = self.systems[0]
        n = system.n_interior
        np.testing.assert_allclose(system.K_II.toarray(), system.A[:n, :n].toarray(), atol=1e-14)

    def test_volume_extension_of_constant(self):
        ps = self.floating
        np.testing.assert_allclose(harmonic_extension_a(ps, np.ones(ps.n_boundary)), 1.0, atol=1e-10)

    def test_size_checks(self):
        with self.assertRaises(DimensionError):
            self.floating.apply(np.ones(self.floating.n_boundary + 1))
        with self.assertRaises(OracleSizeError):
            self.floating.dense_schur(limit=1)

    def test_singular_interior_block(self):
        system = MagicMock()
        system.patch = 7
        system.n_interior = 2
        system.n_boundary = 1
        system.K_II = scipy.sparse.csr_matrix((2, 2))
        with self.assertRaises(FactorizationError):
            PatchSchur(system)


class TestHarmonicExtensions(unittest.TestCase):
    def test_volume_extension_has_smaller_dg_energy(self):
        ps = build_schur(assemble_all(floating_pair(2, 2))[0])
        result = harmonic_extension_ratios(ps, samples=20, seed=1)
        self.assertTrue(np.all(result["d_a"] <= result["d_e"] * (1 + 1e-12)))
        self.assertTrue(np.all(result["ratio"] >= 1 - 1e-12))
        self.assertTrue(np.all(result["energy_ratio"] > 0))

    def test_ratio_is_bounded_under_refinement(self):
        worst = []
        for levels in (1, 2, 3):
            ps = build_schur(assemble_all(floating_pair(2, levels))[1])
            worst.append(harmonic_extension_ratios(ps, samples=20, seed=2)["ratio"].max())
        self.assertLess(max(worst) / min(worst), 2.0)

    def test_energy_ratio_is_bounded_under_refinement(self):
        largest, smallest = [], []
        for levels in (1, 2, 3):
            ps = build_schur(assemble_all(floating_pair(2, levels))[1])
            energy_ratio = harmonic_extension_ratios(ps, samples=20, seed=3)["energy_ratio"]
            self.assertTrue(np.all(energy_ratio > 0))
            largest.append(energy_ratio.max())
            smallest.append(energy_ratio.min())
        self.assertLess(max(largest) / min(largest), 2.0)
        self.assertLess(max(smallest) / min(smallest), 2.0)


if __name__ == "__main__":
    unittest.main()
