#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import unittest

import numpy as np

from podtann.enums import TensorUnit
from podtann.tensors import (
    IDENTITY6,
    SQRT2,
    Rotation3,
    RotationError,
    SymTensor6,
    from_matrix,
    inner,
    invariants,
    norm,
    random_rotation,
    rotate,
    rotation_operator,
    to_matrix,
)


class TestMandel(unittest.TestCase):
    rng = np.random.default_rng(7)

    def test_zero(self) -> None:
        np.testing.assert_array_equal(to_matrix(np.zeros(6)), np.zeros((3, 3)))

    def test_identity(self) -> None:
        np.testing.assert_array_equal(to_matrix(IDENTITY6), np.eye(3))

    def test_shear_slot(self) -> None:
        m = to_matrix(np.array([0.0, 0.0, 0.0, SQRT2 * 0.3, 0.0, 0.0]))
        self.assertAlmostEqual(m[1, 2], 0.3, places=15)
        self.assertAlmostEqual(m[2, 1], 0.3, places=15)
        self.assertEqual(np.count_nonzero(m), 2)

    def test_round_trip(self) -> None:
        t = self.rng.normal(size=(5, 6))
        np.testing.assert_allclose(from_matrix(to_matrix(t)), t, rtol=0.0, atol=1e-15)

    def test_inner_is_double_contraction(self) -> None:
        a = self.rng.normal(size=6)
        b = self.rng.normal(size=6)
        direct = np.sum(to_matrix(a) * to_matrix(b))
        self.assertAlmostEqual(float(inner(a, b)), float(direct), places=12)

    def test_invariants_uniaxial(self) -> None:
        i1, j2, p, q = invariants(np.array([3.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
        self.assertAlmostEqual(float(i1), 3.0)
        self.assertAlmostEqual(float(p), 1.0)
        self.assertAlmostEqual(float(j2), 3.0)
        self.assertAlmostEqual(float(q), 3.0)

    def test_sym_tensor(self) -> None:
        t = SymTensor6([1.0, 2.0, 3.0, 0.0, 0.0, 0.0], unit=TensorUnit.Stress)
        self.assertEqual(t.unit.label, '[kPa]')
        self.assertEqual(SymTensor6.from_matrix(t.matrix, unit=TensorUnit.Stress), t)
        self.assertAlmostEqual(t.dot(t), 14.0)
        self.assertRaises(ValueError, SymTensor6, components=[1.0, 2.0])


class TestRotation(unittest.TestCase):
    rng = np.random.default_rng(11)

    def test_identity(self) -> None:
        t = self.rng.normal(size=6)
        np.testing.assert_allclose(rotate(t, Rotation3.identity()), t, atol=1e-15)

    def test_hydrostatic_isotropy(self) -> None:
        t = 2.5 * IDENTITY6
        np.testing.assert_allclose(rotate(t, random_rotation(self.rng)), t, atol=1e-14)

    def test_matches_matrix_conjugation(self) -> None:
        for _ in range(20):
            t = self.rng.normal(size=6)
            r = random_rotation(self.rng)
            R = r.matrix
            expected = from_matrix(R @ to_matrix(t) @ R.T)
            np.testing.assert_allclose(rotate(t, r), expected, atol=1e-13)
            np.testing.assert_allclose(rotation_operator(r) @ t, expected, atol=1e-13)
            self.assertAlmostEqual(float(norm(rotate(t, r))), float(norm(t)), places=12)

    def test_operator_orthogonal(self) -> None:
        Q = rotation_operator(random_rotation(self.rng))
        np.testing.assert_allclose(Q @ Q.T, np.eye(6), atol=1e-13)

    def test_random_rotation_proper(self) -> None:
        for _ in range(10):
            R = random_rotation(self.rng).matrix
            np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
            self.assertAlmostEqual(np.linalg.det(R), 1.0, places=12)

    def test_random_rotation_uniform(self) -> None:
        """
        Over SO(3) the mean rotation vanishes and every entry has mean square 1/3.
        """
        rng = np.random.default_rng(11)
        R = np.stack([random_rotation(rng).matrix for _ in range(10000)])
        np.testing.assert_allclose(R.mean(axis=0), 0.0, atol=0.03)
        np.testing.assert_allclose((R ** 2).mean(axis=0), 1.0 / 3.0, atol=0.015)

    def test_random_rotation_seeded(self) -> None:
        a = [random_rotation(np.random.default_rng(7)).matrix for _ in range(2)]
        np.testing.assert_array_equal(a[0], a[1])

        rng = np.random.default_rng(7)
        first = random_rotation(rng).matrix
        second = random_rotation(rng).matrix
        np.testing.assert_array_equal(first, a[0])
        self.assertFalse(np.allclose(first, second))

    def test_compose(self) -> None:
        a = random_rotation(self.rng)
        b = random_rotation(self.rng)
        t = self.rng.normal(size=6)
        np.testing.assert_allclose(rotate(t, a.compose(b)), rotate(rotate(t, b), a), atol=1e-13)

    def test_exception_not_orthogonal(self) -> None:
        self.assertRaises(RotationError, Rotation3, matrix=np.diag([1.0, 1.0, 2.0]))
        self.assertRaises(RotationError, rotate, t=np.zeros(6), rotation=np.diag([1.0, 1.0, 1.1]))

    def test_exception_reflection(self) -> None:
        self.assertRaises(RotationError, Rotation3, matrix=np.diag([1.0, 1.0, -1.0]))


if __name__ == '__main__':
    unittest.main()
