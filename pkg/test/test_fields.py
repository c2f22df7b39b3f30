#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import tempfile
import unittest

import numpy as np

from podtann.fields import (
    DegenerateFieldError,
    FieldSample,
    GridError,
    GridMismatchError,
    GridSpec,
    assign_properties,
    correlated_field_from_noise,
    correlated_properties,
    empirical_autocorrelation,
    generate_correlated_field,
    histogram,
    load_field,
    power_spectrum,
    radial_average,
    save_field,
    scale_field,
    theoretical_autocorrelation,
)


class TestGrid(unittest.TestCase):

    def test_spacing(self) -> None:
        grid = GridSpec((1.0, 2.0, 4.0), (4, 4, 8))
        self.assertEqual(grid.spacing, (0.25, 0.5, 0.5))
        self.assertEqual(grid.size, 128)
        self.assertEqual(GridSpec.from_dict(grid.to_dict()), grid)

    def test_lag_distances(self) -> None:
        d = GridSpec((1.0, 1.0, 1.0), (4, 4, 4)).lag_distances()
        self.assertEqual(d[0, 0, 0], 0.0)
        self.assertEqual(d[3, 0, 0], 0.25)
        self.assertEqual(d[2, 0, 0], 0.5)

    def test_exception_grid(self) -> None:
        self.assertRaises(GridError, GridSpec, lengths=(1.0, 1.0), shape=(4, 4, 4))
        self.assertRaises(GridError, GridSpec, lengths=(1.0, 0.0, 1.0), shape=(4, 4, 4))
        self.assertRaises(GridError, GridSpec, lengths=(1.0, 1.0, 1.0), shape=(4, 0, 4))
        self.assertRaises(GridError, power_spectrum, grid=GridSpec((1.0, 1.0, 1.0), (4, 4, 4)), kappa=0.0)


class TestCorrelatedField(unittest.TestCase):
    grid = GridSpec((1.0, 1.0, 1.0), (16, 16, 16))

    def test_deterministic(self) -> None:
        a = generate_correlated_field(self.grid, 20.0, seed=4)
        b = generate_correlated_field(self.grid, 20.0, seed=4)
        c = generate_correlated_field(self.grid, 20.0, seed=5)
        np.testing.assert_array_equal(a.values, b.values)
        self.assertFalse(np.allclose(a.values, c.values))
        self.assertEqual(a.values.shape, (16, 16, 16))

    def test_shift_equivariance(self) -> None:
        noise = np.random.default_rng(0).standard_normal(self.grid.shape)
        f = correlated_field_from_noise(noise, self.grid, 20.0)
        shifted = correlated_field_from_noise(np.roll(noise, (3, -2, 5), axis=(0, 1, 2)), self.grid, 20.0)
        np.testing.assert_allclose(shifted, np.roll(f, (3, -2, 5), axis=(0, 1, 2)), atol=1e-12)

    def test_exception_noise_shape(self) -> None:
        self.assertRaises(
            GridMismatchError,
            correlated_field_from_noise,
            noise=np.zeros((4, 4, 4)),
            grid=self.grid,
            kappa=20.0,
        )

    def test_scale(self) -> None:
        f = scale_field(generate_correlated_field(self.grid, 20.0, seed=1), 18000.0, 5000.0)
        self.assertAlmostEqual(f.mean, 18000.0, places=8)
        self.assertAlmostEqual(f.std, 5000.0, places=8)
        self.assertEqual(f.seed, 1)

    def test_exception_scale(self) -> None:
        flat = FieldSample(np.full(self.grid.shape, 2.0), self.grid, 20.0)
        self.assertRaises(DegenerateFieldError, scale_field, f=flat, target_mean=0.0, target_std=1.0)
        self.assertRaises(ValueError, scale_field, f=flat, target_mean=0.0, target_std=-1.0)

    def test_theoretical_autocorrelation(self) -> None:
        grid = GridSpec((1.0, 1.0, 1.0), (32, 32, 32))
        kappa = 20.0
        c = theoretical_autocorrelation(grid, kappa)
        x = np.arange(9) / 32.0
        np.testing.assert_allclose(c[:9, 0, 0], np.exp(-(kappa * x) ** 2 / 4.0), atol=1e-8)
        np.testing.assert_allclose(c[1, 0, 0], c[-1, 0, 0], atol=1e-14)

    def test_empirical_autocorrelation(self) -> None:
        samples = [generate_correlated_field(self.grid, 20.0, seed=s) for s in range(30)]
        _, empirical = radial_average(self.grid, empirical_autocorrelation(samples))
        _, theoretical = radial_average(self.grid, theoretical_autocorrelation(self.grid, 20.0))
        self.assertEqual(empirical[0], 1.0)
        np.testing.assert_allclose(empirical[:4], theoretical[:4], atol=0.08)
        self.assertRaises(ValueError, empirical_autocorrelation, samples=[])

    def test_radial_average(self) -> None:
        lag, avg = radial_average(self.grid, np.ones(self.grid.shape))
        self.assertEqual(lag[0], 0.0)
        np.testing.assert_allclose(avg, 1.0)
        self.assertTrue(np.all(np.diff(lag) > 0.0))

    def test_histogram(self) -> None:
        f = generate_correlated_field(self.grid, 20.0, seed=2)
        h = histogram(f, bins=20)
        self.assertEqual(h['count'].sum(), self.grid.size)
        width = h['bin_right'] - h['bin_left']
        self.assertAlmostEqual(float(np.sum(h['density'] * width)), 1.0, places=12)

    def test_save_load(self) -> None:
        f = generate_correlated_field(self.grid, 20.0, seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            back = load_field(save_field(f, tmp))
        np.testing.assert_array_equal(back.values, f.values)
        self.assertEqual(back.grid, f.grid)
        self.assertEqual(back.seed, 3)


class TestProperties(unittest.TestCase):
    grid = GridSpec((1.0, 1.0, 1.0), (2, 2, 2))

    def _field(self, values) -> FieldSample:
        return FieldSample(np.asarray(values, dtype=float).reshape(self.grid.shape), self.grid, 10.0)

    def test_aliases_and_cap(self) -> None:
        props = assign_properties(
            {'E': self._field(np.linspace(1e4, 2e4, 8)), 'beta': self._field(np.full(8, 30.0))},
            homogeneous={'nu': 0.3, 'd': 12.0, 'H': 1000.0, 'p0': 100.0, 'R': 1.2},
        )
        self.assertEqual(len(props.params), 8)
        self.assertEqual(props.ignored, ['R', 'p0'])
        p = props.params[-1]
        self.assertEqual(p.E, 2e4)
        self.assertEqual(p.phi, 30.0)
        self.assertEqual(p.psi_dil, 30.0)
        self.assertEqual(p.c, 12.0)

    def test_clip(self) -> None:
        props = assign_properties(
            {'E': self._field(np.full(8, 1e4)), 'nu': self._field([0.3] * 6 + [0.6, 0.7])},
        )
        self.assertEqual(props.clip_counts['nu'], 2)
        self.assertEqual(props.params[-1].nu, 0.499)

    def test_exception_fields(self) -> None:
        other = GridSpec((1.0, 1.0, 1.0), (2, 2, 1))
        odd = FieldSample(np.ones(other.shape), other, 10.0)
        self.assertRaises(GridMismatchError, assign_properties, fields={})
        self.assertRaises(GridMismatchError, assign_properties, fields={'E': self._field(np.ones(8)), 'nu': odd})
        self.assertRaises(GridMismatchError, assign_properties, fields={'E': self._field(np.ones(8))})

    def test_correlated_properties(self) -> None:
        a = correlated_properties(self.grid, 5.0, seed=8)
        b = correlated_properties(self.grid, 5.0, seed=8)
        self.assertEqual(a.params, b.params)
        self.assertEqual(len(a.params), 8)
        self.assertTrue(all(p.H == 1000.0 for p in a.params))
        self.assertEqual(a.ignored, ['K', 'R', 'alpha', 'p0'])


if __name__ == '__main__':
    unittest.main()
