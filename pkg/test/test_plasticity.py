#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import unittest

import numpy as np

from podtann.ensemble import generate_strain_path
from podtann.enums import YieldModel
from podtann.plasticity import (
    MaterialParams,
    MaterialParamsError,
    MaterialTable,
    NonConvergenceError,
    PointState,
    StrainIncrementError,
    dp_params_from_mc,
    elastic_stiffness,
    integrate_increment,
    integrate_path,
    yield_function,
)
from podtann.tensors import (
    IDENTITY6,
    SQRT2,
    deviator,
    inner,
    norm,
    trace,
)


class TestMaterialParams(unittest.TestCase):

    def test_von_mises_limit(self) -> None:
        eta, k = dp_params_from_mc(c=12.0, phi=0.0)
        self.assertEqual(eta, 0.0)
        self.assertAlmostEqual(k, 2.0 * 12.0 / np.sqrt(3.0), places=12)

        p = MaterialParams(E=5500.0, nu=0.3, model=YieldModel.VonMises, Su=12.0)
        self.assertEqual(p.cone, (0.0, 0.0, k))

    def test_associative_default(self) -> None:
        p = MaterialParams(E=5500.0, nu=0.3, c=10.0, phi=32.0)
        self.assertEqual(p.psi_dil, 32.0)
        self.assertTrue(p.associative)

    def test_round_trip(self) -> None:
        p = MaterialParams(E=6500.0, nu=0.3, c=12.0, phi=30.0, H=3500.0)
        self.assertEqual(MaterialParams.from_dict(p.to_dict()), p)

    def test_exception_params(self) -> None:
        self.assertRaises(MaterialParamsError, MaterialParams, E=5500.0, nu=0.5)
        self.assertRaises(MaterialParamsError, MaterialParams, E=0.0, nu=0.3)
        self.assertRaises(MaterialParamsError, MaterialParams, E=5500.0, nu=0.3, H=-1.0)
        self.assertRaises(MaterialParamsError, MaterialParams, E=5500.0, nu=0.3, phi=90.0)
        self.assertRaises(MaterialParamsError, MaterialTable, params=[])


class TestIntegration(unittest.TestCase):
    dp = MaterialParams(E=5500.0, nu=0.3, c=10.0, phi=32.0, H=4000.0)
    vm = MaterialParams(E=5500.0, nu=0.3, model=YieldModel.VonMises, Su=10.0, H=1000.0)
    rng = np.random.default_rng(3)

    def test_elastic_increment(self) -> None:
        d = np.array([-1e-5, 2e-6, 0.0, 0.0, 1e-6, 0.0])
        r = integrate_increment(self.dp, PointState(), d)
        np.testing.assert_allclose(r.sigma.components, elastic_stiffness(self.dp) @ d, rtol=1e-12, atol=1e-12)
        self.assertEqual(r.d_inc, 0.0)
        self.assertAlmostEqual(r.psi, 0.5 * float(inner(r.sigma.components, d)), places=15)
        self.assertEqual(r.state_new.alpha, 0.0)

    def test_plastic_state_on_surface(self) -> None:
        d = np.array([0.0, 0.0, 0.0, 0.0, 0.0, SQRT2 * 0.01])
        for params in (self.dp, self.vm):
            r = integrate_increment(params, PointState(), d)
            self.assertGreater(r.state_new.alpha, 0.0)
            self.assertGreater(r.d_inc, 0.0)
            f = yield_function(MaterialTable([params]), r.sigma.components[None, :], np.array([r.state_new.alpha]))
            self.assertLess(abs(float(f[0])), 1e-9)

    def test_von_mises_isochoric_flow(self) -> None:
        d = np.array([0.004, -0.002, -0.001, 0.0, SQRT2 * 0.003, 0.0])
        r = integrate_increment(self.vm, PointState(), d)
        self.assertGreater(r.state_new.alpha, 0.0)
        self.assertAlmostEqual(float(trace(r.state_new.eps_pl)), 0.0, places=15)

    def test_dissipation_non_negative(self) -> None:
        for params in (self.dp, self.vm):
            for _ in range(5):
                increments = self.rng.normal(0.0, 1e-3, size=(50, 6))
                _, _, d, _ = integrate_path(params, increments)
                self.assertGreaterEqual(float(np.min(d)), -1e-10)

    def test_first_law_plastic_paths(self) -> None:
        """
        σ_mid:Δε − Δψ − d_inc vanishes relative to |σ_mid|·|Δε| on every increment.
        """
        for params in (self.dp, self.vm):
            for _ in range(3):
                increments = generate_strain_path(self.rng, n_inc=60).increments
                sigma, psi, d, state = integrate_path(params, increments)
                self.assertGreater(state.alpha, 0.0)

                sigma_mid = 0.5 * (np.vstack([np.zeros(6), sigma[:-1]]) + sigma)
                residual = inner(sigma_mid, increments) - np.diff(psi, prepend=0.0) - d
                scale = norm(sigma_mid) * norm(increments)
                self.assertTrue(np.all(np.abs(residual) <= 1e-6 * scale + 1e-15))

    def test_dense_oracle_random_paths(self) -> None:
        for params in (self.dp, self.vm):
            increments = generate_strain_path(self.rng, n_inc=25, std_dev=1e-3).increments
            coarse, psi_c, d_c, state_c = integrate_path(params, increments)
            dense, psi_d, d_d, state_d = integrate_path(params, increments, substeps=1000)
            self.assertGreater(state_c.alpha, 0.0)

            scale = float(np.max(np.abs(dense)))
            np.testing.assert_allclose(coarse, dense, rtol=0.0, atol=1e-6 * scale)
            np.testing.assert_allclose(psi_c, psi_d, rtol=1e-6, atol=1e-12)
            np.testing.assert_allclose(np.cumsum(d_c), np.cumsum(d_d), rtol=1e-6, atol=1e-12)
            self.assertAlmostEqual(state_c.alpha, state_d.alpha, delta=1e-6 * state_d.alpha)

    def test_yield_onset_inside_increment(self) -> None:
        """
        An increment that starts elastic dissipates only over its plastic part.
        """
        table = MaterialTable([self.vm])
        d = np.array([0.0, 0.0, 0.0, 0.0, 0.0, SQRT2 * 0.004])
        split = integrate_increment(self.vm, integrate_increment(self.vm, PointState(), 0.5 * d).state_new, 0.5 * d)
        whole = integrate_increment(self.vm, PointState(), d)
        np.testing.assert_allclose(whole.sigma.components, split.sigma.components, rtol=1e-8, atol=1e-10)
        self.assertAlmostEqual(whole.state_new.alpha, split.state_new.alpha, delta=1e-8 * whole.state_new.alpha)
        f = yield_function(table, whole.sigma.components[None, :], np.array([whole.state_new.alpha]))
        self.assertLess(abs(float(f[0])), 1e-9)

    def test_apex_return(self) -> None:
        r = integrate_increment(self.dp, PointState(), 2e-3 * IDENTITY6)
        self.assertTrue(r.apex)
        self.assertGreater(r.d_inc, 0.0)
        self.assertLess(float(norm(deviator(r.sigma.components))), 1e-9)
        f = yield_function(MaterialTable([self.dp]), r.sigma.components[None, :], np.array([r.state_new.alpha]))
        self.assertLess(abs(float(f[0])), 1e-9)

    def test_exception_apex_without_dilatancy(self) -> None:
        params = MaterialParams(E=5500.0, nu=0.3, c=10.0, phi=32.0, psi_dil=0.0)
        self.assertRaises(
            NonConvergenceError, integrate_increment, params=params, state=PointState(), d_eps=2e-3 * IDENTITY6,
        )

    def test_hydrostatic_compression_stays_elastic(self) -> None:
        d = -1e-3 * IDENTITY6
        r = integrate_increment(self.dp, PointState(), d)
        self.assertEqual(r.state_new.alpha, 0.0)

    def test_exception_increment_norm(self) -> None:
        d = np.array([0.05, 0.0, 0.0, 0.0, 0.0, 0.0])
        self.assertRaises(StrainIncrementError, integrate_increment, params=self.dp, state=PointState(), d_eps=d)


if __name__ == '__main__':
    unittest.main()
