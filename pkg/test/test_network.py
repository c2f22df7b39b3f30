#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import tempfile
import unittest

import numpy as np

from podtann.enums import (
    InferenceMode,
    LossVariant,
    Potential,
)
from podtann.network import (
    DimensionMismatchError,
    DivergedError,
    EnergyModel,
    ModeMismatchError,
    NadamState,
    Scalers,
    TannDataset,
    TrainConfig,
    ZQuadratic,
    add_z_offset,
    dissipation_pred,
    forward_energy,
    infer_path,
    init_network,
    load_dataset,
    load_evolution,
    load_model,
    loss,
    loss_and_gradients,
    nadam_step,
    save_evolution,
    save_model,
    stress_from_energy,
    train,
    train_evolution,
)
from podtann.params import ConfigError
from podtann.storage import (
    FingerprintMismatchError,
    SchemaError,
)


def _dataset(
        rng: np.random.Generator,
        n: int = 60,
        n_strain: int = 1,
        r: int = 2,
        potential: Potential = Potential.Helmholtz,
) -> TannDataset:
    """
    Samples of Ψ = ½·3·|E|² + ½|Z|² with D = −Z·Ż, spread over three paths.
    """
    E = rng.uniform(-0.01, 0.01, size=(n, n_strain))
    Z = rng.uniform(-0.5, 0.5, size=(n, r))
    Zdot = rng.uniform(-0.05, 0.05, size=(n, r))
    Psi = 1.5 * np.sum(E ** 2, axis=1) + 0.5 * np.sum(Z ** 2, axis=1)
    return TannDataset(
        E=E,
        Z=Z,
        Zdot=Zdot,
        dE=np.full((n, n_strain), 1e-4),
        Sigma=3.0 * E,
        Psi=Psi,
        D=-np.sum(Z * Zdot, axis=1),
        path=np.repeat(np.arange(3), n // 3),
        potential=potential,
        basis_fingerprint='abc',
    )


def _random_model(
        rng: np.random.Generator,
        n_strain: int,
        r: int,
        h: int,
        potential: Potential = Potential.Helmholtz,
) -> EnergyModel:
    n_in = n_strain + r
    scalers = Scalers(
        e_scale=rng.uniform(0.5, 2.0, size=n_strain),
        z_scale=rng.uniform(0.5, 2.0, size=r),
        conj_scale=rng.uniform(0.5, 2.0, size=n_strain),
        psi_scale=1.7,
        d_scale=0.3,
    )
    return EnergyModel(
        rng.normal(size=(h, n_in)),
        rng.normal(size=h),
        rng.normal(size=h),
        n_strain=n_strain,
        potential=potential,
        scalers=scalers,
    )


class TestEnergyModel(unittest.TestCase):
    rng = np.random.default_rng(31)

    def test_pristine_energy(self) -> None:
        m = _random_model(self.rng, 6, 4, 8)
        self.assertEqual(float(m.energy(np.zeros(6), np.zeros(4))[0]), 0.0)

    def test_conjugate_is_energy_gradient(self) -> None:
        h = 1e-6
        for potential in (Potential.Helmholtz, Potential.Gibbs):
            m = _random_model(self.rng, 2, 3, 5, potential)
            E = self.rng.normal(size=2)
            Z = self.rng.normal(size=3)
            fd = np.zeros(2)
            for i in range(2):
                step = np.zeros(2)
                step[i] = h
                fd[i] = (m.energy(E + step, Z)[0] - m.energy(E - step, Z)[0]) / (2.0 * h)
            np.testing.assert_allclose(m.conjugate(E, Z)[0], potential.sign * fd, rtol=1e-6, atol=1e-8)
            np.testing.assert_array_equal(stress_from_energy(m, E, Z), m.conjugate(E, Z))

    def test_dissipation_is_isv_gradient(self) -> None:
        h = 1e-6
        m = add_z_offset(_random_model(self.rng, 2, 3, 5), ZQuadratic(np.eye(3), np.ones(3)))
        E = self.rng.normal(size=2)
        Z = self.rng.normal(size=3)
        Zdot = self.rng.normal(size=3)
        fd = (m.energy(E, Z + h * Zdot)[0] - m.energy(E, Z - h * Zdot)[0]) / (2.0 * h)
        self.assertAlmostEqual(float(m.dissipation(E, Z, Zdot)[0]), -fd, delta=1e-6 * max(1.0, abs(fd)))
        np.testing.assert_array_equal(dissipation_pred(m, E, Z, Zdot), m.dissipation(E, Z, Zdot))

    def test_offset_leaves_conjugate(self) -> None:
        m = _random_model(self.rng, 2, 3, 5)
        g = ZQuadratic(self.rng.normal(size=(3, 3)), self.rng.normal(size=3))
        shifted = add_z_offset(m, g)
        E = self.rng.normal(size=(4, 2))
        Z = self.rng.normal(size=(4, 3))
        Zdot = self.rng.normal(size=(4, 3))
        np.testing.assert_allclose(shifted.conjugate(E, Z), m.conjugate(E, Z), atol=1e-14)
        expected = m.dissipation(E, Z, Zdot) - np.sum(g.gradient(Z) * Zdot, axis=1)
        np.testing.assert_allclose(shifted.dissipation(E, Z, Zdot), expected, rtol=1e-12, atol=1e-12)
        self.assertRaises(DimensionMismatchError, add_z_offset, m=m, g=ZQuadratic.zero(2))

    def test_exception_dimensions(self) -> None:
        m = _random_model(self.rng, 2, 3, 5)
        self.assertRaises(DimensionMismatchError, forward_energy, m=m, E=np.zeros(3), Z=np.zeros(3))
        self.assertRaises(DimensionMismatchError, EnergyModel, W1=np.zeros((4, 5)), b1=np.zeros(3), w2=np.zeros(4), n_strain=2)
        self.assertRaises(DimensionMismatchError, init_network, n_in=0, h=4, seed=0)


class TestLoss(unittest.TestCase):
    rng = np.random.default_rng(37)

    def test_gradients_match_finite_differences(self) -> None:
        data = _dataset(self.rng, n=12, n_strain=1, r=3)
        m = add_z_offset(_random_model(self.rng, 1, 3, 3), ZQuadratic(0.1 * np.eye(3), np.zeros(3)))
        cfg = TrainConfig(w_psi=1.0, w_sigma=0.7, w_d=0.5, w_d_sign=2.0)

        _, _, grads = loss_and_gradients(m, data, cfg)
        h = 1e-6
        for name, theta in m.parameters().items():
            fd = np.zeros_like(theta)
            for idx in np.ndindex(theta.shape):
                plus = {k: v.copy() for k, v in m.parameters().items()}
                minus = {k: v.copy() for k, v in m.parameters().items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                fd[idx] = (loss(m.with_parameters(plus), data, cfg)[0] - loss(m.with_parameters(minus), data, cfg)[0]) / (2.0 * h)
            np.testing.assert_allclose(grads[name], fd, rtol=1e-5, atol=1e-7)

    def test_reduced_variant(self) -> None:
        cfg = TrainConfig(loss_variant=LossVariant.Reduced)
        self.assertEqual(cfg.weights, {'psi': 0.0, 'sigma': 1.0, 'd': 0.0, 'd_sign': 1.0})
        data = _dataset(self.rng)
        m = _random_model(self.rng, 1, 2, 4)
        m.scalers = data.scalers
        total, terms = loss(m, data, cfg)
        self.assertAlmostEqual(total, terms['sigma'] + terms['d_sign'], places=12)

    def test_exception_config(self) -> None:
        self.assertRaises(ConfigError, TrainConfig, w_psi=-1.0)
        self.assertRaises(ConfigError, TrainConfig, loss_variant=LossVariant.Reduced, w_sigma=0.0, w_d_sign=0.0)
        self.assertRaises(ConfigError, TrainConfig, batch=0)

    def test_from_config(self) -> None:
        cfg = TrainConfig.from_config({'weights': {'psi': 2.0}, 'epochs': 5, 'loss_variant': 'reduced'})
        self.assertEqual(cfg.w_psi, 2.0)
        self.assertEqual(cfg.epochs, 5)
        self.assertIs(cfg.loss_variant, LossVariant.Reduced)
        self.assertEqual(cfg.to_dict()['loss_variant'], 'reduced')


class TestNadam(unittest.TestCase):

    def test_quadratic_bowl(self) -> None:
        params = {'w': np.array([0.5, -0.3, 0.2])}
        state = NadamState()
        for _ in range(1000):
            params = nadam_step(params, {'w': params['w']}, state, lr=0.01)
        self.assertEqual(state.t, 1000)
        self.assertLess(float(np.linalg.norm(params['w'])), 0.05)

    def test_exception_shape(self) -> None:
        self.assertRaises(
            DimensionMismatchError,
            nadam_step,
            params={'w': np.zeros(3)},
            grads={'w': np.zeros(2)},
            state=NadamState(),
            lr=0.1,
        )


class TestTraining(unittest.TestCase):
    rng = np.random.default_rng(41)

    def setUp(self) -> None:
        self.data = _dataset(self.rng)
        self.cfg = TrainConfig(
            learning_rate=1e-3, batch=16, epochs=60, hidden=8, seed=3, early_stop=0.0, validation_fraction=0.0,
        )

    def test_loss_decreases(self) -> None:
        initial = init_network(3, 8, 3, n_strain=1)
        initial.scalers = self.data.scalers
        start = loss(initial, self.data, self.cfg)[0]

        m, curves = train(self.data, self.cfg)
        self.assertEqual(len(curves), 60)
        self.assertTrue(all(np.isfinite(c.loss) for c in curves))
        self.assertTrue(all(np.isnan(c.val_loss) for c in curves))
        self.assertLess(curves[-1].loss, start)
        self.assertEqual(m.basis_fingerprint, 'abc')

    def test_validation_paths(self) -> None:
        cfg = TrainConfig(learning_rate=1e-3, batch=16, epochs=3, hidden=8, validation_fraction=0.34)
        _, curves = train(self.data, cfg)
        self.assertTrue(all(np.isfinite(c.val_loss) for c in curves))

    def test_deterministic(self) -> None:
        a, _ = train(self.data, self.cfg)
        b, _ = train(self.data, self.cfg)
        for name in ('W1', 'b1', 'w2'):
            np.testing.assert_array_equal(a.parameters()[name], b.parameters()[name])

    def test_zero_epochs(self) -> None:
        cfg = TrainConfig(epochs=0, hidden=8, seed=3)
        m, curves = train(self.data, cfg)
        self.assertEqual(curves, [])
        np.testing.assert_array_equal(m.W1, init_network(3, 8, 3, n_strain=1).W1)

    def test_early_stop(self) -> None:
        cfg = TrainConfig(epochs=50, hidden=8, early_stop=1e9, validation_fraction=0.0)
        _, curves = train(self.data, cfg)
        self.assertEqual(len(curves), 1)

    def test_exception_diverged(self) -> None:
        cfg = TrainConfig(learning_rate=1e300, epochs=5, hidden=8)
        with np.errstate(all='ignore'):
            self.assertRaises(DivergedError, train, dataset=self.data, cfg=cfg)

    def test_dataset_split(self) -> None:
        train_set, val_set = self.data.split_by_path(0.34, np.random.default_rng(0))
        self.assertEqual(len(train_set) + len(val_set), len(self.data))
        self.assertEqual(len(np.intersect1d(train_set.path, val_set.path)), 0)
        single = self.data.subset(np.flatnonzero(self.data.path == 0))
        self.assertIsNone(single.split_by_path(0.5, np.random.default_rng(0))[1])

    def test_given_model_not_modified(self) -> None:
        start = init_network(3, 8, 3, n_strain=1)
        before = {k: v.copy() for k, v in start.parameters().items()}
        scalers = start.scalers
        cfg = TrainConfig(learning_rate=1e-3, batch=16, epochs=2, hidden=8, validation_fraction=0.0)

        m, _ = train(self.data, cfg, model=start)
        self.assertIs(start.scalers, scalers)
        self.assertIsNone(start.basis_fingerprint)
        for name, value in before.items():
            np.testing.assert_array_equal(start.parameters()[name], value)
        self.assertIs(m.scalers, self.data.scalers)
        self.assertEqual(m.basis_fingerprint, 'abc')
        self.assertFalse(np.array_equal(m.W1, before['W1']))

    def test_scaled_sample(self) -> None:
        s = self.data.scalers
        sample = self.data[4]
        np.testing.assert_array_equal(sample.Z, self.data.Z[4] / s.z_scale)
        np.testing.assert_array_equal(sample.Sigma, self.data.Sigma[4] / s.conj_scale)
        self.assertEqual(sample.Psi, float(self.data.Psi[4] / s.psi_scale))
        self.assertLessEqual(float(np.max(np.abs(sample.Zdot))), 1.0)
        self.assertLessEqual(abs(sample.D), 1.0)

    def test_reduced_dataset_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            back = load_dataset(self.data.to_artifact({'r': self.data.r}).write_on(tmp, 'reduced'))
            model_path = save_model(init_network(3, 4, 0, n_strain=1), tmp)
            self.assertRaises(SchemaError, load_dataset, manifest_path=model_path)

        for name in ('E', 'Z', 'Zdot', 'dE', 'Sigma', 'Psi', 'D', 'path'):
            np.testing.assert_array_equal(getattr(back, name), getattr(self.data, name))
        np.testing.assert_array_equal(back.scalers.e_scale, self.data.scalers.e_scale)
        self.assertEqual(back.scalers.psi_scale, self.data.scalers.psi_scale)
        self.assertEqual(back.basis_fingerprint, 'abc')
        self.assertIs(back.potential, Potential.Helmholtz)

    def test_exception_dataset(self) -> None:
        d = self.data
        self.assertRaises(
            DimensionMismatchError,
            TannDataset,
            E=d.E, Z=d.Z, Zdot=d.Zdot, dE=d.dE, Sigma=d.Sigma, Psi=d.Psi[:-1], D=d.D, path=d.path,
        )


class TestInference(unittest.TestCase):
    rng = np.random.default_rng(43)

    def test_teacher_forced(self) -> None:
        m = _random_model(self.rng, 1, 2, 4)
        dE = np.full((10, 1), 1e-3)
        Z = self.rng.normal(size=(10, 2))
        Zdot = self.rng.normal(size=(10, 2))
        result = infer_path(m, dE, Z, Zdot)
        np.testing.assert_allclose(result.E[:, 0], 1e-3 * np.arange(1, 11))
        np.testing.assert_allclose(result.conjugate, m.conjugate(result.E, Z))
        np.testing.assert_allclose(result.d, m.dissipation(result.E, Z, Zdot))

    def test_exception_modes(self) -> None:
        m = _random_model(self.rng, 1, 2, 4)
        dE = np.full((3, 1), 1e-3)
        self.assertRaises(ModeMismatchError, infer_path, m=m, dE=dE)
        self.assertRaises(ModeMismatchError, infer_path, m=m, dE=dE, mode=InferenceMode.Autonomous)

    def test_autonomous(self) -> None:
        data = _dataset(self.rng)
        cfg = TrainConfig(learning_rate=1e-3, batch=16, epochs=20, hidden=6)
        evolution, curve = train_evolution(data, cfg)
        self.assertTrue(all(np.isfinite(curve)))
        self.assertEqual(evolution.r, 2)

        m = _random_model(self.rng, 1, 2, 4)
        result = infer_path(m, np.full((5, 1), 1e-4), evolution=evolution, mode=InferenceMode.Autonomous)
        self.assertEqual(result.Z.shape, (5, 2))
        self.assertTrue(np.all(np.isfinite(result.psi)))

    def test_save_load(self) -> None:
        m = add_z_offset(_random_model(self.rng, 1, 2, 4, Potential.Gibbs), ZQuadratic(np.eye(2), np.ones(2)))
        m.basis_fingerprint = 'f00'
        evolution, _ = train_evolution(_dataset(self.rng), TrainConfig(epochs=2, hidden=4))
        E = self.rng.normal(size=(3, 1))
        Z = self.rng.normal(size=(3, 2))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(m, tmp)
            back = load_model(path, basis_fingerprint='f00')
            self.assertRaises(FingerprintMismatchError, load_model, manifest_path=path, basis_fingerprint='bad')
            evolution_back = load_evolution(save_evolution(evolution, tmp))

        self.assertIs(back.potential, Potential.Gibbs)
        np.testing.assert_array_equal(back.energy(E, Z), m.energy(E, Z))
        np.testing.assert_array_equal(back.conjugate(E, Z), m.conjugate(E, Z))
        np.testing.assert_array_equal(evolution_back.W2, evolution.W2)


if __name__ == '__main__':
    unittest.main()
