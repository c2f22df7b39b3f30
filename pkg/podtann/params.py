#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Run configuration documents.

Each sub-command owns a default document. A user document is validated against it
(unknown keys and type mismatches are rejected), then deep-merged over it,
and the result is handed to the command as a `ConfigMap`.
"""

import copy
import json
import logging

from typing import (
    Any,
    Dict,
    Optional,
)

__all__ = [
    'ConfigError',
    'ConfigMap',
    'FlatMap',
    'DEFAULTS',
    'RUN_MANIFEST_FORMAT',
    'deep_merge',
    'load_document',
    'resolve_config',
]

logger = logging.getLogger(__name__)

RUN_MANIFEST_FORMAT = 'podtann-run'

_TRAINING = {
    'hidden': 100,
    'loss_variant': 'full',
    'weights': {
        'psi': 1.0,
        'sigma': 1.0,
        'd': 1.0,
        'd_sign': 1.0,
    },
    'learning_rate': 5e-5,
    'batch': 1000,
    'epochs': 100,
    'early_stop': 1e-4,
    'validation_fraction': 0.1,
}

DEFAULTS: Dict[str, Dict] = {
    'gen-ruc': {
        'seed': 0,
        'name': 'ruc',
        'ensemble': {
            'preset': 'ellipsoidal',
            'n_points': 64,
            'inclusion_fraction': 0.25,
            'heterogeneity': 0.1,
            'materials': None,
            'weights': None,
            'field': {
                'lengths': [1.0, 1.0, 1.0],
                'shape': [4, 4, 4],
                'kappa': 5.0,
            },
        },
        'paths': {
            'count': 5,
            'n_inc': 1000,
            'std_dev': 5e-4,
            'init_vol_strain': -5e-4,
            'j2_cap': 0.015,
            'substeps': 1,
        },
        'rotations': 5,
    },
    'gen-field': {
        'seed': 0,
        'name': 'field',
        'grid': {
            'lengths': [1.0, 1.0, 1.0],
            'shape': [32, 32, 32],
        },
        'kappa': 5.0,
        'target_mean': 18000.0,
        'target_std': 5000.0,
        'realizations': 10,
        'bins': 50,
    },
    'pod': {
        'dataset': None,
        'name': 'basis',
        'r_list': [5, 10, 25],
        'normalization': 'max',
        'svd_method': 'auto',
        'normalize_blocks': False,
        'energy_tolerance': 1e-4,
    },
    'train': dict(
        copy.deepcopy(_TRAINING),
        seed=0,
        dataset=None,
        basis=None,
        reduced=None,
        name='model',
        r=25,
        evolution={
            'enabled': False,
            'hidden': 100,
            'epochs': 100,
            'learning_rate': 1e-3,
        },
    ),
    'train-macro': dict(
        copy.deepcopy(_TRAINING),
        seed=0,
        dataset=None,
        name='macro_model',
        loss_variant='reduced',
        threshold=1e-4,
        r=None,
        normalize_blocks=False,
        svd_method='auto',
    ),
    'infer': {
        'seed': 0,
        'name': 'prediction',
        'model': None,
        'basis': None,
        'dataset': None,
        'evolution': None,
        'mode': 'teacher_forced',
        'path': {
            'kind': 'random',
            'path_id': 0,
            'n_inc': 200,
            'std_dev': 5e-4,
            'init_vol_strain': -5e-4,
            'j2_cap': 0.015,
            'amplitude': 0.005,
            'cycles': 2,
            'steps': 50,
            'f_max': 0.8,
        },
    },
    'reconstruct': {
        'name': 'reconstruction',
        'basis': None,
        'dataset': None,
        'r_list': [5, 10, 25, 50, 100],
        'path_id': None,
    },
    'macro-gen': {
        'seed': 0,
        'name': 'macro',
        'system': {
            'n_el': 200,
            'k_total': 1000.0,
            'fy_min': 1.0,
            'fy_max': 100.0,
            'h_ratio': 0.0,
        },
        'paths': {
            'count': 5,
            'n_targets': 10,
            'steps_per_target': 50,
            'f_max': 0.9,
        },
    },
    'ingest': {
        'name': 'snapshots',
        'manifest': None,
        'normalize_blocks': False,
        'threshold': 1e-4,
    },
}


class ConfigError(Exception):
    pass


class FlatMap(object):
    """
    A nested document is convenient to write but awkward to compare key by key.

    The `FlatMap` converts 'nest' to 'flat':
        > every leaf is addressed by its complete dotted location,
        > lists are leaves, their items are never expanded,
        > every inner mapping is recorded in `nodes`.

    eg:
    >>> p = FlatMap({'paths': {'count': 5, 'n_inc': 1000}, 'r_list': [5, 10]})
    >>> p.flat
    {'paths.count': 5, 'paths.n_inc': 1000, 'r_list': [5, 10]}
    >>> p.nodes
    {'paths'}
    >>>
    """

    def __init__(
            self,
            params: Dict,
    ) -> None:
        if not isinstance(params, dict):
            raise ConfigError(
                f'Parameter `params` expected a "dict", but "{type(params).__name__}" was given.'
            )
        self._nest = params

        self._flat = {}
        self._nodes = set()
        self._recur_map(affix='', mapping=self._nest)

    @property
    def flat(self) -> Dict[str, Any]:
        return self._flat

    @property
    def nodes(self) -> set:
        return self._nodes

    def _recur(
            self,
            name: str,
            value: Any,
    ) -> None:
        if isinstance(value, dict):
            self._nodes.add(name)
            self._recur_map(affix=name, mapping=value)
        else:
            self._flat[name] = value

    def _recur_map(
            self,
            affix: str,
            mapping: Dict,
    ) -> None:
        for k, v in mapping.items():
            if affix:
                name = f'{affix}.{k}'
            else:
                name = k
            self._recur(name=name, value=v)


class ConfigMap(dict):
    """
    `dict` with attribute access, nested mappings are wrapped too.

    eg:
    >>> c = ConfigMap(paths={'count': 5})
    >>> c.paths.count
    5
    >>>
    """

    def __init__(self, **kwargs):
        super().__init__(**{k: _wrap(v) for k, v in kwargs.items()})

    def __getattr__(self, key):
        try:
            return self[key]
        except KeyError:
            raise AttributeError(f"'{self.__class__.__name__}' object has no attribute '{key}'")

    def __setattr__(self, key, value):
        self[key] = _wrap(value)

    def to_dict(self) -> Dict:
        return {k: v.to_dict() if isinstance(v, ConfigMap) else copy.deepcopy(v) for k, v in self.items()}


def _wrap(
        value: Any,
) -> Any:
    if isinstance(value, dict) and not isinstance(value, ConfigMap):
        return ConfigMap(**value)
    return value


def deep_merge(
        base: Dict,
        override: Dict,
) -> Dict:
    merged = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = copy.deepcopy(v)
    return merged


def _kind(
        value: Any,
) -> str:
    if isinstance(value, bool):
        return 'bool'
    if isinstance(value, (int, float)):
        return 'number'
    if isinstance(value, str):
        return 'str'
    if isinstance(value, (list, tuple)):
        return 'list'
    if isinstance(value, dict):
        return 'dict'
    return type(value).__name__


def _validate(
        command: str,
        doc: Dict,
        defaults: Dict,
) -> None:
    reference = FlatMap(defaults)
    given = FlatMap(doc)

    for node in given.nodes:
        if node not in reference.nodes and reference.flat.get(node, 0) is not None:
            raise ConfigError(f'Command `{command}` has no configuration section `{node}`.')

    for key, value in given.flat.items():
        if key in reference.nodes:
            raise ConfigError(f'Key `{key}` expected a mapping, but a "{_kind(value)}" was given.')
        if key not in reference.flat:
            # children of a free-form (null default) entry
            if any(key.startswith(f'{k}.') for k, v in reference.flat.items() if v is None):
                continue
            raise ConfigError(f'Command `{command}` has no configuration key `{key}`.')

        expected = reference.flat[key]
        if expected is None or value is None:
            continue
        if _kind(expected) != _kind(value):
            raise ConfigError(
                f'Key `{key}` expected a "{_kind(expected)}", but a "{_kind(value)}" was given.'
            )


def load_document(
        path: str,
        command: Optional[str] = None,
) -> Dict:
    """
    Reads a configuration document, or the configuration echoed by a previous run manifest.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f'Configuration `{path}` could not be read: {e}')

    if not isinstance(doc, dict):
        raise ConfigError(f'Configuration `{path}` expected a JSON object at the top level.')

    if doc.get('format') == RUN_MANIFEST_FORMAT:
        if command is not None and doc.get('command') != command:
            raise ConfigError(
                f'Run manifest `{path}` belongs to command `{doc.get("command")}`, not `{command}`.'
            )
        logger.info('re-running from manifest %s', path)
        return doc.get('config', {})
    return doc


def resolve_config(
        command: str,
        doc: Optional[Dict] = None,
        seed: Optional[int] = None,
) -> ConfigMap:
    if command not in DEFAULTS:
        raise ConfigError(f'Parameter `command` expected one of {sorted(DEFAULTS)}, but `{command}` was given.')

    defaults = DEFAULTS[command]
    doc = doc or {}
    _validate(command, doc, defaults)

    resolved = deep_merge(defaults, doc)
    if seed is not None:
        if 'seed' not in defaults:
            logger.warning('command `%s` takes no seed, --seed %d ignored', command, seed)
        else:
            resolved['seed'] = int(seed)

    return ConfigMap(**resolved)
