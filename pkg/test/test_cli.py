#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import os
import tempfile
import unittest

import pandas as pd

from podtann.cli import (
    RUN_MANIFEST,
    exit_code_for,
    main,
)
from podtann.enums import ExitCode
from podtann.network import ModeMismatchError
from podtann.params import ConfigError
from podtann.pod import LayoutMismatchError
from podtann.storage import ShapeError

_SMALL_RUC = {
    'ensemble': {'n_points': 2},
    'paths': {'count': 1, 'n_inc': 10},
    'rotations': 0,
}

_SMALL_TRAINING = {
    'hidden': 8,
    'batch': 16,
    'epochs': 3,
    'validation_fraction': 0.0,
}


class TestExitCodes(unittest.TestCase):

    def test_families(self) -> None:
        self.assertIs(exit_code_for(ConfigError('x')), ExitCode.Config)
        self.assertIs(exit_code_for(ModeMismatchError('x')), ExitCode.Config)
        self.assertIs(exit_code_for(LayoutMismatchError('x')), ExitCode.Mismatch)
        self.assertIs(exit_code_for(ShapeError('x')), ExitCode.Mismatch)
        self.assertIsNone(exit_code_for(KeyError('x')))


class TestCommands(unittest.TestCase):

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def _config(self, name: str, doc: dict) -> str:
        path = os.path.join(self.tmp.name, f'{name}.json')
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(doc, f)
        return path

    def _run(self, command: str, doc: dict, out: str) -> int:
        out = os.path.join(self.tmp.name, out)
        return main([command, '--config', self._config(f'{command}_{os.path.basename(out)}', doc), '--out', out])

    def _path(self, *parts: str) -> str:
        return os.path.join(self.tmp.name, *parts)

    def _run_manifest(self, out: str) -> dict:
        with open(self._path(out, RUN_MANIFEST), 'r', encoding='utf-8') as f:
            return json.load(f)

    def test_gen_ruc(self) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)

        with open(self._path('a', 'ruc.json'), 'r', encoding='utf-8') as f:
            meta = json.load(f)['meta']
        self.assertEqual(meta['n_samples'], 10)

        manifest = self._run_manifest('a')
        self.assertEqual(manifest['command'], 'gen-ruc')
        self.assertEqual(manifest['config']['paths']['count'], 1)
        self.assertEqual(set(manifest['outputs']), {'ruc.json', 'ruc.bin', 'ruc_summary.csv'})

    def test_rerun_from_manifest(self) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)
        out = self._path('b')
        self.assertEqual(main(['gen-ruc', '--config', self._path('a', RUN_MANIFEST), '--out', out]), 0)
        self.assertEqual(self._run_manifest('a')['outputs'], self._run_manifest('b')['outputs'])

    def test_seed_override(self) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)
        out = self._path('b')
        self.assertEqual(main(['gen-ruc', '--config', self._path('gen-ruc_a.json'), '--out', out, '--seed', '9']), 0)
        self.assertEqual(self._run_manifest('b')['config']['seed'], 9)
        self.assertNotEqual(
            self._run_manifest('a')['outputs']['ruc.bin'],
            self._run_manifest('b')['outputs']['ruc.bin'],
        )

    def test_exit_config(self) -> None:
        self.assertEqual(self._run('gen-ruc', {'paths': {'cnt': 1}}, 'a'), int(ExitCode.Config))
        self.assertFalse(os.path.exists(self._path('a', RUN_MANIFEST)))

    def test_pod_and_reconstruct(self) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)
        dataset = self._path('a', 'ruc.json')
        self.assertEqual(self._run('pod', {'dataset': dataset, 'r_list': [2, 4]}, 'p'), 0)

        errors = pd.read_csv(self._path('p', 'basis_energy_error.csv'))
        self.assertEqual(list(errors['r']), [2, 4])

        doc = {'dataset': dataset, 'basis': self._path('p', 'basis.json'), 'r_list': [1, 2]}
        self.assertEqual(self._run('reconstruct', doc, 'q'), 0)
        report = pd.read_csv(self._path('q', 'reconstruction.csv'))
        self.assertIn('mae_all', report.columns)

    def _train(self, out: str) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)
        dataset = self._path('a', 'ruc.json')
        self.assertEqual(self._run('pod', {'dataset': dataset, 'r_list': [2]}, 'p'), 0)
        doc = dict(_SMALL_TRAINING, dataset=dataset, basis=self._path('p', 'basis.json'), r=2)
        self.assertEqual(self._run('train', doc, out), 0)

    def test_train_from_reduced_dataset(self) -> None:
        self._train('t')
        outputs = self._run_manifest('t')['outputs']
        self.assertIn('model_reduced.json', outputs)
        self.assertIn('model_reduced.bin', outputs)

        doc = dict(_SMALL_TRAINING, reduced=self._path('t', 'model_reduced.json'))
        self.assertEqual(self._run('train', doc, 'u'), 0)
        again = self._run_manifest('u')['outputs']
        self.assertEqual(again['model.bin'], outputs['model.bin'])
        self.assertNotIn('model_reduced.json', again)

    def test_model_manifest_losses(self) -> None:
        self._train('t')
        with open(self._path('t', 'model.json'), 'r', encoding='utf-8') as f:
            losses = json.load(f)['meta']['losses']
        curves = pd.read_csv(self._path('t', 'model_curves.csv'))

        self.assertEqual(losses['epoch'], len(curves))
        for name in ('loss', 'psi', 'sigma', 'd', 'd_sign'):
            expected = float(curves[name].iloc[-1])
            self.assertAlmostEqual(losses[name], expected, delta=1e-12 * abs(expected))
        self.assertIsNone(losses['val_loss'])

    def test_exit_mismatch(self) -> None:
        self.assertEqual(self._run('gen-ruc', _SMALL_RUC, 'a'), 0)
        other = dict(_SMALL_RUC, ensemble={'n_points': 3})
        self.assertEqual(self._run('gen-ruc', other, 'b'), 0)
        self.assertEqual(self._run('pod', {'dataset': self._path('a', 'ruc.json')}, 'p'), 0)

        doc = dict(_SMALL_TRAINING, dataset=self._path('b', 'ruc.json'), basis=self._path('p', 'basis.json'), r=2)
        self.assertEqual(self._run('train', doc, 't'), int(ExitCode.Mismatch))

    def test_binary_reports(self) -> None:
        out = self._path('a')
        config = self._config('small', _SMALL_RUC)
        self.assertEqual(main(['gen-ruc', '--config', config, '--out', out, '--format', 'binary']), 0)
        self.assertTrue(os.path.isfile(self._path('a', 'ruc_summary.json')))
        self.assertTrue(os.path.isfile(self._path('a', 'ruc_summary.bin')))

    def test_macro_pipeline(self) -> None:
        gen = {
            'system': {'n_el': 8},
            'paths': {'count': 2, 'n_targets': 3, 'steps_per_target': 10},
        }
        self.assertEqual(self._run('macro-gen', gen, 'm'), 0)
        dataset = self._path('m', 'macro.json')

        self.assertEqual(self._run('ingest', {'manifest': dataset}, 'i'), 0)
        table = pd.read_csv(self._path('i', 'snapshots_table.csv'))
        self.assertEqual(len(table), 60)

        self.assertEqual(self._run('train-macro', dict(_SMALL_TRAINING, dataset=dataset), 't'), 0)

        doc = {
            'model': self._path('t', 'macro_model.json'),
            'basis': self._path('t', 'macro_model_basis.json'),
            'dataset': dataset,
            'path': {'kind': 'dataset', 'path_id': 1},
        }
        self.assertEqual(self._run('infer', doc, 'x'), 0)
        prediction = pd.read_csv(self._path('x', 'prediction.csv'))
        self.assertEqual(len(prediction), 30)
        self.assertEqual(list(prediction.columns[:3]), ['increment', 'F', 'U_pred'])


if __name__ == '__main__':
    unittest.main()
