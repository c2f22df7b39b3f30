#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Artifact files: a JSON manifest next to a binary file of little-endian float64 blocks.

    <name>.json   kind, version, meta, block table (offset, shape, dtype, unit), sha256
    <name>.bin    the blocks, row-major, back to back

Readers locate blocks through their offsets only,
so the order in which a manifest lists its blocks is irrelevant.
"""

import os
import json
import hashlib
import logging

from typing import (
    Dict,
    Iterable,
    Optional,
)

import numpy as np

from .enums import ArtifactKind

from .formats import json_dumps

__all__ = [
    'ARTIFACT_FORMAT',
    'ARTIFACT_VERSION',
    'Artifact',
    'SchemaError',
    'ShapeError',
    'UnitError',
    'FingerprintMismatchError',
    'fingerprint',
]

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT = 'podtann-artifact'

ARTIFACT_VERSION = 1

_DTYPE = '<f8'

_ITEM_SIZE = np.dtype(_DTYPE).itemsize


class SchemaError(Exception):
    pass


class ShapeError(Exception):
    pass


class UnitError(Exception):
    pass


class FingerprintMismatchError(Exception):
    pass


def fingerprint(
        *parts: bytes,
) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


def _block_bytes(
        array: np.ndarray,
) -> bytes:
    return np.ascontiguousarray(array, dtype=_DTYPE).tobytes()


class Artifact(object):
    """
    An in-memory artifact: named float blocks plus free-form metadata.

    eg:
    >>> a = Artifact(ArtifactKind.Basis, meta={'r': 2}, blocks={'S': np.ones(2)})
    >>> path = a.write_on('/tmp', 'basis')
    >>> Artifact.read(path).blocks['S']
    array([1., 1.])
    >>>
    """

    def __init__(
            self,
            kind: ArtifactKind,
            meta: Optional[Dict] = None,
            blocks: Optional[Dict[str, np.ndarray]] = None,
            units: Optional[Dict[str, str]] = None,
    ) -> None:
        self._kind = ArtifactKind(kind)
        self._meta = meta or {}
        self._blocks = {k: np.asarray(v, dtype=float) for k, v in (blocks or {}).items()}
        self._units = units or {}

    @property
    def kind(self) -> ArtifactKind:
        return self._kind

    @property
    def meta(self) -> Dict:
        return self._meta

    @property
    def blocks(self) -> Dict[str, np.ndarray]:
        return self._blocks

    @property
    def units(self) -> Dict[str, str]:
        return self._units

    def payload(self) -> bytes:
        return b''.join(_block_bytes(self._blocks[k]) for k in sorted(self._blocks))

    @property
    def sha256(self) -> str:
        return fingerprint(self.payload())

    def manifest(self) -> Dict:
        table = {}
        offset = 0
        for name in sorted(self._blocks):
            a = self._blocks[name]
            entry = {
                'offset': offset,
                'shape': list(a.shape),
                'dtype': _DTYPE,
            }
            if name in self._units:
                entry['unit'] = self._units[name]
            table[name] = entry
            offset += a.size * _ITEM_SIZE

        return {
            'format': ARTIFACT_FORMAT,
            'version': ARTIFACT_VERSION,
            'kind': self._kind.value,
            'meta': self._meta,
            'blocks': table,
            'sha256': self.sha256,
        }

    def write_on(
            self,
            directory: str,
            name: str,
    ) -> str:
        """
        :param directory: an existing output folder
        :return: path of the written manifest
        """
        manifest_path = os.path.join(directory, f'{name}.json')
        binary_path = os.path.join(directory, f'{name}.bin')

        with open(binary_path, 'wb') as f:
            f.write(self.payload())

        manifest = self.manifest()
        manifest['binary'] = os.path.basename(binary_path)
        with open(manifest_path, 'w', encoding='utf-8') as f:
            f.write(json_dumps(manifest))
            f.write('\n')

        logger.debug('wrote %s artifact %s (%d blocks)', self._kind.value, manifest_path, len(self._blocks))
        return manifest_path

    @classmethod
    def read(
            cls,
            manifest_path: str,
            kind: Optional[ArtifactKind] = None,
            required: Optional[Iterable[str]] = (),
            require_units: Optional[bool] = False,
    ) -> 'Artifact':
        try:
            with open(manifest_path, 'r', encoding='utf-8') as f:
                manifest = json.load(f)
        except (OSError, ValueError) as e:
            raise SchemaError(f'Manifest `{manifest_path}` could not be read: {e}')

        for key in ('format', 'version', 'kind', 'blocks', 'binary'):
            if key not in manifest:
                raise SchemaError(f'Manifest `{manifest_path}` has no `{key}` entry.')
        if manifest['format'] != ARTIFACT_FORMAT:
            raise SchemaError(f'Manifest `{manifest_path}` is not a {ARTIFACT_FORMAT} file.')
        if kind is not None and manifest['kind'] != ArtifactKind(kind).value:
            raise SchemaError(
                f'Manifest `{manifest_path}` holds a "{manifest["kind"]}" artifact, '
                f'but "{ArtifactKind(kind).value}" was expected.'
            )

        table = manifest['blocks']
        for name in required:
            if name not in table:
                raise SchemaError(f'Manifest `{manifest_path}` misses block `{name}`.')

        binary_path = os.path.join(os.path.dirname(manifest_path), manifest['binary'])
        try:
            with open(binary_path, 'rb') as f:
                raw = f.read()
        except OSError as e:
            raise SchemaError(f'Binary file of `{manifest_path}` could not be read: {e}')

        blocks = {}
        units = {}
        for name, entry in table.items():
            for key in ('offset', 'shape'):
                if key not in entry:
                    raise SchemaError(f'Block `{name}` has no `{key}` entry.')
            if entry.get('dtype', _DTYPE) != _DTYPE:
                raise SchemaError(f'Block `{name}` expected dtype {_DTYPE}, but {entry["dtype"]} was given.')

            shape = tuple(int(s) for s in entry['shape'])
            count = int(np.prod(shape)) if shape else 1
            start = int(entry['offset'])
            stop = start + count * _ITEM_SIZE
            if start < 0 or stop > len(raw):
                raise ShapeError(
                    f'Block `{name}` needs bytes [{start}, {stop}) but the binary file has {len(raw)}.'
                )
            blocks[name] = np.frombuffer(raw[start:stop], dtype=_DTYPE).reshape(shape).astype(float)

            if 'unit' in entry:
                units[name] = entry['unit']
            elif require_units:
                raise UnitError(f'Block `{name}` declares no unit.')

        checksum = manifest.get('sha256')
        if checksum is not None and checksum != fingerprint(raw):
            raise SchemaError(f'Checksum of `{manifest_path}` does not match its blocks.')

        return cls(manifest['kind'], meta=manifest.get('meta', {}), blocks=blocks, units=units)
