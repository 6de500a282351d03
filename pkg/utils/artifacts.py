"""
Artifact files: CSV matrices and vectors, JSON metadata and reports.

Floats are written with 12 significant digits and JSON keys are sorted, so equal
results give byte-identical files. Every JSON document carries format_version.
"""

import dataclasses
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from algorithms.covariance import gram_from_matrix
from models.errors import ValidationError
from models.gaussian_vector import PathEnsemble
from models.grid import Grid
from models.gram import GramMatrix
from models.kernel import MovingAverageKernel

logger = logging.getLogger(__name__)

FORMAT_VERSION = '1.0'
SIGNIFICANT_DIGITS = 12
FLOAT_FORMAT = f'%.{SIGNIFICANT_DIGITS}g'

PathLike = Union[str, Path]


def _round(value: float) -> float:
    if not math.isfinite(value):
        return value
    return float(format(value, f'.{SIGNIFICANT_DIGITS}g'))


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types with floats rounded to the artifact precision."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        for name in ('continuity_caveat', 'ratio'):
            if hasattr(type(obj), name):
                out[name] = to_jsonable(getattr(obj, name))
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: PathLike, payload: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(to_jsonable(payload))
    document['format_version'] = FORMAT_VERSION
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + '\n')
    return path


def read_json(path: PathLike) -> Dict:
    document = json.loads(Path(path).read_text())
    version = document.get('format_version')
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported format_version {version!r}", field='format_version')
    return document


def write_matrix_csv(path: PathLike, matrix: np.ndarray, header: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(matrix), delimiter=',', fmt=FLOAT_FORMAT,
               header=header or '', comments='')
    return path


def _read_numeric_csv(path: PathLike, field: Optional[str] = None) -> np.ndarray:
    """Numeric CSV with an optional header row; `field` names the setting the path came from."""
    field = field or str(path)
    try:
        data = np.genfromtxt(path, delimiter=',', dtype=float, ndmin=2)
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read input file ({exc})", field=field) from exc
    if data.size and np.any(np.isnan(data[0])):
        data = data[1:]
    if data.size == 0 or np.any(np.isnan(data)):
        raise ValidationError(f"{path}: expected a numeric CSV table", field=field)
    return data


def read_matrix_csv(path: PathLike, field: Optional[str] = None) -> np.ndarray:
    return _read_numeric_csv(path, field)


def read_vector_csv(path: PathLike, field: Optional[str] = None) -> np.ndarray:
    """A single column (or a single row) of numbers."""
    data = _read_numeric_csv(path, field)
    if min(data.shape) != 1:
        raise ValidationError(f"{path}: expected a single column of values", field=field or str(path))
    return data.ravel()


def load_tabulated_csv(path: PathLike, scale: float = 1.0) -> MovingAverageKernel:
    """Kernel from two columns (x, f(x)); x strictly increasing and <= 0."""
    data = _read_numeric_csv(path, field='process.table')
    if data.shape[1] != 2:
        raise ValidationError(f"{path}: tabulated kernels need exactly two columns", field='process.table')
    return MovingAverageKernel.tabulated(data[:, 0], data[:, 1], scale=scale)


def save_gram(gram: GramMatrix, directory: PathLike, stem: str = 'gram') -> Tuple[Path, Path]:
    directory = Path(directory)
    csv_path = write_matrix_csv(directory / f'{stem}.csv', gram.sigma)
    json_path = write_json(directory / f'{stem}.json', gram.metadata())
    return csv_path, json_path


def load_gram(csv_path: PathLike, json_path: Optional[PathLike] = None) -> GramMatrix:
    """Gram from its CSV and JSON sidecar; the PSD checks run again on import."""
    csv_path = Path(csv_path)
    meta = read_json(json_path or csv_path.with_suffix('.json'))
    grid = Grid(meta['grid']['times'])
    keep = ('convergence_tol', 'normalization', 'label')
    return gram_from_matrix(read_matrix_csv(csv_path), grid, quad_step=meta['quad_step'], L=meta['L'],
                            tail_error=meta['tail_error'], mode=meta['mode'],
                            **{k: meta[k] for k in keep if k in meta})


def save_ensemble(ensemble: PathEnsemble, directory: PathLike, stem: str) -> Tuple[Path, Path]:
    directory = Path(directory)
    csv_path = write_matrix_csv(directory / f'{stem}.csv', ensemble.paths)
    json_path = write_json(directory / f'{stem}.json', ensemble.metadata())
    return csv_path, json_path


def load_ensemble(csv_path: PathLike, json_path: Optional[PathLike] = None) -> PathEnsemble:
    csv_path = Path(csv_path)
    meta = read_json(json_path or csv_path.with_suffix('.json'))
    return PathEnsemble(grid=Grid(meta['grid']['times']), paths=read_matrix_csv(csv_path), seed=meta['seed'],
                        method=meta['method'], substeps=meta.get('substeps'), L=meta.get('L'))
