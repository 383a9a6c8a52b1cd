import unittest

import numpy as np

from dgieti.assembly import extended_dof_map, extended_terms, extended_vector
from dgieti.exceptions import DimensionError, TopologyError
from dgieti.geometry import box_grid, compute_metrics
from dgieti.manufactured import get_solution
from dgieti.norms import (
    discrete_dg_norm, discrete_norms, dg_error, dg_norm, equivalence_ratios, face_gram, face_l2_distance,
    face_l2_norm, l2_error, l2_project_face, local_dg_norm, parameter_l2_norm, projection_error_ratio,
)


def interpolate_linear(patch, fn):
    g1, g2 = (kv.greville() for kv in patch.space.kvs)
    points, _ = patch.map_grid(g1, g2)
    return fn(points)


class TestDgNorm(unittest.TestCase):
    def test_constant_has_zero_norm(self):
        mp = box_grid(2, 1, 2, levels=1)
        self.assertAlmostEqual(dg_norm(mp, [np.ones(p.space.size) for p in mp.patches]), 0.0, places=12)

    def test_linear_function(self):
        mp = box_grid(1, 1, 1)
        u = interpolate_linear(mp.patches[0], lambda x: x[:, 0])
        self.assertAlmostEqual(dg_norm(mp, [u]), 1.0)

    def test_unit_jump(self):
        mp = box_grid(2, 1, 1, levels=1)
        u = [np.zeros(mp.patches[0].space.size), np.ones(mp.patches[1].space.size)]
        h = compute_metrics(mp.patches[0]).h
        self.assertAlmostEqual(dg_norm(mp, u, delta=6.0), 12.0 / h)
        terms = extended_terms(mp, 0, delta=6.0)
        self.assertAlmostEqual(local_dg_norm(terms, extended_vector(terms.dofmap, u)), 6.0 / h)

    def test_extended_input(self):
        mp = box_grid(2, 1, 1, levels=1)
        u = [np.ones(extended_dof_map(mp, k).n_ext) for k in range(2)]
        u[0][-1] = 2.0
        self.assertGreater(dg_norm(mp, u, extended=True), 0.0)

    def test_wrong_sizes(self):
        mp = box_grid(2, 1, 1)
        with self.assertRaises(DimensionError):
            dg_norm(mp, [np.ones(4)])
        with self.assertRaises(DimensionError):
            dg_norm(mp, [np.ones(4), np.ones(5)])


class TestFaceProjection(unittest.TestCase):
    def test_matching_projection_is_identity(self):
        mp = box_grid(2, 1, 2, levels=1)
        v = np.random.default_rng(0).standard_normal(4)
        np.testing.assert_allclose(l2_project_face(mp, 0, 1, v), v, atol=1e-12)

    def test_constants_are_preserved(self):
        mp = box_grid(2, 1, 2, levels=[2, 1])
        np.testing.assert_allclose(l2_project_face(mp, 0, 1, np.ones(6)), np.ones(4), atol=1e-12)
        np.testing.assert_allclose(l2_project_face(mp, 1, 0, np.ones(4)), np.ones(6), atol=1e-12)

    def test_projection_is_stable(self):
        mp = box_grid(2, 1, 2, levels=[3, 1])
        gram = face_gram(mp, 0, 1)
        v = np.random.default_rng(1).standard_normal(10)
        c = gram.project(v)
        own = face_l2_distance(gram, v, np.zeros_like(c))
        self.assertLessEqual(face_l2_norm(gram, c), own * (1 + 1e-12))
        # the projection error is orthogonal to the neighbor face space
        self.assertAlmostEqual(face_l2_distance(gram, v, c) + face_l2_norm(gram, c), own)

    def test_not_a_neighbor(self):
        with self.assertRaises(TopologyError):
            face_gram(box_grid(2, 2, 1), 0, 3)

    def test_wrong_trace_size(self):
        with self.assertRaises(DimensionError):
            l2_project_face(box_grid(2, 1, 1), 0, 1, np.ones(5))

    def test_matching_error_ratio_vanishes(self):
        mp = box_grid(2, 1, 2, levels=1)
        coeffs = np.random.default_rng(2).standard_normal(mp.patches[0].space.size)
        self.assertLess(projection_error_ratio(mp, 0, 1, coeffs), 1e-20)

    def test_error_ratio_is_bounded_under_refinement(self):
        rng = np.random.default_rng(3)
        worst = []
        for level in (2, 3, 4):
            mp = box_grid(2, 1, 2, levels=[level, level - 1])
            space = mp.patches[0].space
            ratios = []
            for _ in range(10):
                c = np.zeros(space.shape)
                c[-1, :] = rng.standard_normal(space.shape[1])
                ratios.append(projection_error_ratio(mp, 0, 1, c.ravel()))
            worst.append(max(ratios))
        self.assertGreater(min(worst), 0.0)
        self.assertLess(max(worst) / min(worst), 3.0)


class TestDiscreteNorms(unittest.TestCase):
    def setUp(self):
        self.patch = box_grid(1, 1, 1, levels=1).patches[0]

    def test_constant(self):
        norms = discrete_norms(self.patch, 2.0 * np.ones(9))
        self.assertAlmostEqual(norms["box"], 9.0)
        self.assertAlmostEqual(norms["grad"], 0.0)
        self.assertAlmostEqual(norms["box_west"], 6.0)

    def test_first_differences(self):
        c = np.repeat(np.arange(3.0), 3)
        norms = discrete_norms(self.patch, c)
        self.assertAlmostEqual(norms["xi1"], 6.0)
        self.assertAlmostEqual(norms["xi2"], 0.0)
        self.assertAlmostEqual(norms["grad"], 6.0)

    def test_parameter_l2_norm(self):
        self.assertAlmostEqual(parameter_l2_norm(self.patch, np.ones(9)), 1.0)

    def test_discrete_dg_norm(self):
        mp = box_grid(2, 1, 2, levels=[2, 1])
        dofmap = extended_dof_map(mp, 0)
        self.assertAlmostEqual(discrete_dg_norm(mp, 0, np.ones(dofmap.n_ext)), 0.0, places=12)
        u = np.random.default_rng(4).standard_normal(dofmap.n_ext)
        grad = discrete_norms(mp.patches[0], u[:dofmap.n_own])["grad"]
        single = discrete_dg_norm(mp, 0, u, delta=6.0) - grad
        double = discrete_dg_norm(mp, 0, u, delta=12.0) - grad
        self.assertGreater(single, 0.0)
        self.assertAlmostEqual(double, 2.0 * single)


class TestErrors(unittest.TestCase):
    def test_linear_interpolant_is_exact(self):
        mp = box_grid(2, 1, 1, levels=1, size=(2.0, 1.0))
        exact = get_solution("linear-x")
        u = [interpolate_linear(p, exact.u) for p in mp.patches]
        self.assertLess(l2_error(mp, u, exact.u), 1e-12)
        self.assertLess(dg_error(mp, u, exact.u, exact.grad), 1e-10)

    def test_l2_error_of_zero(self):
        mp = box_grid(2, 1, 2, levels=1)
        u = [np.zeros(p.space.size) for p in mp.patches]
        self.assertAlmostEqual(l2_error(mp, u, lambda x: np.ones(len(x))), 1.0)


class TestEquivalence(unittest.TestCase):
    def test_ratios_are_stable(self):
        coarse = equivalence_ratios(box_grid(2, 2, 2, levels=1), samples=20)
        fine = equivalence_ratios(box_grid(2, 2, 2, levels=2), samples=20)
        self.assertEqual(coarse.size, 20)
        self.assertGreater(coarse.min(), 0.0)
        self.assertGreater(fine.min(), 0.0)
        self.assertLess(abs(fine.min() / coarse.min() - 1.0), 0.25)
        self.assertLess(abs(fine.max() / coarse.max() - 1.0), 0.25)


if __name__ == "__main__":
    unittest.main()
