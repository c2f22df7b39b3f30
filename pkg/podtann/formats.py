#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Plain-text renderings: JSON documents for manifests and CSV tables for reports.

Every report is 'plot ready': one header row, one row per sample, no index column.
"""

import json
import hashlib
import functools

from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
)

import numpy as np
import pandas as pd

__all__ = [
    'json_dumps',
    'mandel_columns',
    'prediction_columns',
    'table_frame',
    'write_csv',
    'write_json',
    'sha256_of_file',
]

json_dumps: Callable[[Any], str] = functools.partial(
    json.dumps,
    indent=4,
    sort_keys=True,
    ensure_ascii=False,
)

# enough digits to round-trip a float64 through text
_FLOAT_FORMAT = '%.17g'

_MANDEL_SUFFIXES = (
    '11',
    '22',
    '33',
    '23',
    '13',
    '12',
)


def mandel_columns(
        prefix: str,
        width: Optional[int] = 6,
) -> List[str]:
    if width == 6:
        return [f'{prefix}{s}' for s in _MANDEL_SUFFIXES]
    if width == 1:
        return [prefix]
    return [f'{prefix}{i + 1}' for i in range(width)]


def prediction_columns(
        n_strain: int,
        r: int,
        strain: Optional[str] = 'E',
        conjugate: Optional[str] = 'S',
) -> List[str]:
    """
    Header of the inference report:

        increment, <strain>.., <conjugate>_pred.., Psi_pred, D_pred,
        <conjugate>_true.., Psi_true, D_true, Z1..Zr
    """
    columns = ['increment']
    columns.extend(mandel_columns(strain, n_strain))
    columns.extend(f'{c}_pred' for c in mandel_columns(conjugate, n_strain))
    columns.extend(['Psi_pred', 'D_pred'])
    columns.extend(f'{c}_true' for c in mandel_columns(conjugate, n_strain))
    columns.extend(['Psi_true', 'D_true'])
    columns.extend(f'Z{j + 1}' for j in range(r))
    return columns


def _as_column(
        values: Any,
) -> np.ndarray:
    a = np.asarray(values)
    if a.ndim == 0:
        return a.reshape(1)
    return a


def table_frame(
        columns: Dict[str, Sequence],
) -> pd.DataFrame:
    return pd.DataFrame({k: _as_column(v) for k, v in columns.items()})


def write_csv(
        path: str,
        columns: Dict[str, Sequence],
) -> str:
    frame = table_frame(columns)
    frame.to_csv(
        path,
        index=False,
        float_format=_FLOAT_FORMAT,
        lineterminator='\n',
    )
    return path


def write_json(
        path: str,
        document: Dict,
) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json_dumps(document))
        f.write('\n')
    return path


def sha256_of_file(
        path: str,
) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()
