import unittest

import numpy as np
import numpy.testing as npt

from ibfgs import linalg
from ibfgs.errors import DegenerateDenominatorError, SingularMatrixError


def _random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def _curvature_pair(rng, n):
    """A pair with s^T y > 0, from a random SPD matrix."""
    s = rng.standard_normal(n)
    return s, _random_spd(rng, n) @ s


class LinalgTest(unittest.TestCase):

    def test_symmetrize_copies_lower_triangle(self):
        a = np.array([[1.0, 9.0], [2.0, 3.0]])
        npt.assert_array_equal(linalg.symmetrize(a), [[1.0, 2.0], [2.0, 3.0]])

    def test_bfgs_update_identity_example(self):
        B = linalg.bfgs_update(np.eye(2), np.array([1.0, 0.0]), np.array([2.0, 0.0]))
        npt.assert_allclose(B, [[2.0, 0.0], [0.0, 1.0]])

    def test_bfgs_update_secant_and_positive_definite(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            B = _random_spd(rng, n)
            s, y = _curvature_pair(rng, n)
            B_new = linalg.bfgs_update(B, s, y)
            self.assertLessEqual(np.linalg.norm(B_new @ s - y), 1e-10 * (1 + np.linalg.norm(y)))
            self.assertTrue(linalg.is_positive_definite(B_new))
            npt.assert_array_equal(B_new, B_new.T)

    def test_bfgs_update_rejects_nonpositive_curvature(self):
        with self.assertRaises(DegenerateDenominatorError):
            linalg.bfgs_update(np.eye(2), np.array([1.0, 0.0]), np.array([-1.0, 0.0]))

    def test_bfgs_update_rejects_zero_step(self):
        with self.assertRaises(DegenerateDenominatorError):
            linalg.bfgs_update(np.eye(2), np.zeros(2), np.array([1.0, 0.0]))

    def test_bfgs_update_checks_dimensions(self):
        with self.assertRaises(ValueError):
            linalg.bfgs_update(np.eye(2), np.ones(3), np.ones(3))

    def test_aggregate_inverse_single_component(self):
        B = np.eye(2)
        s, y = np.array([1.0, 0.0]), np.array([2.0, 0.0])
        Binv = linalg.aggregate_inverse_update(np.eye(2), B, s, y)
        npt.assert_allclose(Binv, np.linalg.inv(linalg.bfgs_update(B, s, y)), atol=1e-12)

    def test_aggregate_inverse_tracks_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            m = int(rng.integers(1, 9))
            n = int(rng.integers(1, 9))
            Bs = [np.eye(n) for _ in range(m)]
            Binv = np.eye(n) / m
            for _ in range(50):
                i = int(rng.integers(m))
                s, y = _curvature_pair(rng, n)
                B_new = linalg.bfgs_update(Bs[i], s, y)
                Binv = linalg.aggregate_inverse_update(Binv, Bs[i], s, y)
                Bs[i] = B_new
            residual = np.linalg.norm(Binv @ np.sum(Bs, axis=0) - np.eye(n), 'fro')
            self.assertLessEqual(residual, 1e-6)

    def test_aggregate_inverse_result_is_symmetric(self):
        rng = np.random.default_rng(5)
        s, y = _curvature_pair(rng, 4)
        Binv = linalg.aggregate_inverse_update(np.eye(4) / 3, np.eye(4), s, y)
        npt.assert_array_equal(Binv, Binv.T)

    def test_solve_apply(self):
        npt.assert_allclose(linalg.solve_apply(2 * np.eye(2), np.array([1.0, -1.0])), [2.0, -2.0])

    def test_dense_sum_invert(self):
        rng = np.random.default_rng(7)
        components = [_random_spd(rng, 3) for _ in range(4)]
        inverse = linalg.dense_sum_invert(components)
        npt.assert_allclose(inverse @ np.sum(components, axis=0), np.eye(3), atol=1e-10)

    def test_dense_sum_invert_two_identities(self):
        npt.assert_allclose(linalg.dense_sum_invert([np.eye(2), np.eye(2)]), 0.5 * np.eye(2))

    def test_dense_sum_invert_singular(self):
        with self.assertRaises(SingularMatrixError):
            linalg.dense_sum_invert([np.array([[1.0, 1.0], [1.0, 1.0]])])

    def test_is_positive_definite(self):
        self.assertTrue(linalg.is_positive_definite(np.eye(3)))
        self.assertFalse(linalg.is_positive_definite(np.diag([1.0, -1.0])))


if __name__ == '__main__':
    unittest.main()
