"""
Run configuration.

A run is described by one JSON document whose sections mirror the dataclasses
below. Every field has a default; unknown keys are rejected with their dotted
path. Precedence: defaults < file < environment < command-line flags.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from models.errors import ValidationError
from models.grid import Grid
from models.kernel import Example31Spec, MovingAverageKernel

ENV_OUTPUT_DIR = 'MACFS_OUTPUT_DIR'
ENV_THREADS = 'MACFS_THREADS'

PROCESS_FAMILIES = ('fbm', 'indicator', 'tabulated', 'example31')
GRAM_MODES = ('full', 'fresh')
SIMULATION_METHODS = ('cholesky', 'direct')
NAMED_H = ('one', 'gap')
NAMED_PHI = ('t', 't2', 'tsin')


@dataclass(frozen=True)
class ProcessConfig:
    family: str = 'fbm'
    hurst: float = 0.5
    width: float = 1.0
    table: Optional[str] = None            # CSV of (x, f(x)) for tabulated kernels
    xs: Tuple[float, ...] = ()
    vals: Tuple[float, ...] = ()
    scale: float = 1.0
    truncation_hint: Optional[float] = None
    n_max: int = 12
    b_first: float = 1.0
    b_ratio: float = 0.5
    b_values: Tuple[float, ...] = ()
    corrected_sign: bool = True

    def __post_init__(self):
        if self.family not in PROCESS_FAMILIES:
            raise ValidationError(f"family must be one of {PROCESS_FAMILIES}, got {self.family!r}",
                                  field='process.family')
        if self.family != 'tabulated' or self.table is None:
            # surfaces parameter errors (e.g. hurst outside (0, 1)) at load time
            self.build()

    def build(self) -> Union[MovingAverageKernel, Example31Spec]:
        try:
            if self.family == 'example31':
                return Example31Spec(n_max=self.n_max, b_first=self.b_first, b_ratio=self.b_ratio,
                                     b_values=tuple(self.b_values), corrected_sign=self.corrected_sign)
            if self.family == 'fbm':
                return MovingAverageKernel(family='fbm', hurst=self.hurst, scale=self.scale,
                                           truncation_hint=self.truncation_hint)
            if self.family == 'indicator':
                return MovingAverageKernel(family='indicator', width=self.width, scale=self.scale,
                                           truncation_hint=self.truncation_hint)
            return MovingAverageKernel(family='tabulated', xs=tuple(self.xs), vals=tuple(self.vals),
                                       scale=self.scale, truncation_hint=self.truncation_hint)
        except ValidationError as exc:
            raise ValidationError(exc.message, field=f'process.{exc.field}') from exc


@dataclass(frozen=True)
class GridConfig:
    T: float = 1.0
    n_steps: int = 16
    start: float = 0.0
    times: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        self.build()

    def build(self) -> Grid:
        try:
            if self.times is not None:
                return Grid.explicit(self.times)
            if not isinstance(self.n_steps, int):
                raise ValidationError("n_steps must be an integer", field='n_steps')
            return Grid.uniform(self.T, self.n_steps, self.start)
        except ValidationError as exc:
            name = exc.field or 'grid.times'
            raise ValidationError(exc.message, field=name if name.startswith('grid') else f'grid.{name}') from exc


@dataclass(frozen=True)
class NumericsConfig:
    L: Optional[float] = None
    quad_step: Optional[float] = None
    mode: str = 'full'
    normalize: bool = False
    order: int = 6
    check_convergence: bool = True
    conv_rtol: float = 1e-7
    max_refinements: int = 3
    max_tail_error: Optional[float] = 1e-6
    psd_tol: float = 1e-8
    tau_rank: float = 1e-10
    tau_cfs: float = 1e-10
    tau_degen: float = 1e-6

    def __post_init__(self):
        if self.mode not in GRAM_MODES:
            raise ValidationError(f"mode must be one of {GRAM_MODES}", field='numerics.mode')
        for name in ('L', 'quad_step'):
            value = getattr(self, name)
            if value is not None and not (value > 0):
                raise ValidationError(f"{name} must be positive", field=f'numerics.{name}')
        for name in ('conv_rtol', 'psd_tol', 'tau_rank', 'tau_cfs', 'tau_degen'):
            if not (getattr(self, name) >= 0):
                raise ValidationError(f"{name} must be nonnegative", field=f'numerics.{name}')
        if not (isinstance(self.order, int) and self.order >= 1):
            raise ValidationError("order must be a positive integer", field='numerics.order')


@dataclass(frozen=True)
class SimulateConfig:
    n_paths: int = 10000
    substeps: int = 16
    methods: Tuple[str, ...] = SIMULATION_METHODS

    def __post_init__(self):
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            raise ValidationError("n_paths must be a positive integer", field='simulate.n_paths')
        if not (isinstance(self.substeps, int) and self.substeps >= 1):
            raise ValidationError("substeps must be a positive integer", field='simulate.substeps')
        unknown = set(self.methods) - set(SIMULATION_METHODS)
        if unknown or not self.methods:
            raise ValidationError(f"methods must be taken from {SIMULATION_METHODS}", field='simulate.methods')


@dataclass(frozen=True)
class CfsConfig:
    k_smallest: int = 3
    extra_weights: Tuple[str, ...] = ()    # CSV files, one weight vector each
    with_tubes: bool = False

    def __post_init__(self):
        if not (isinstance(self.k_smallest, int) and self.k_smallest >= 0):
            raise ValidationError("k_smallest must be a nonnegative integer", field='cfs.k_smallest')


@dataclass(frozen=True)
class TubeConfig:
    targets: Tuple[str, ...] = ('zero',)   # 'zero' or CSV files with psi on the grid
    eps: Tuple[float, ...] = (0.5, 1.0)
    n_paths: int = 10000

    def __post_init__(self):
        if not self.eps or any(not (e > 0) for e in self.eps):
            raise ValidationError("eps must be a nonempty list of positive values", field='tube.eps')
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            raise ValidationError("n_paths must be a positive integer", field='tube.n_paths')
        if not self.targets:
            raise ValidationError("at least one target is needed", field='tube.targets')


@dataclass(frozen=True)
class DeconvConfig:
    h: str = 'one'          # 'one', 'gap' or a CSV of h on [-T, 0]
    phi: str = 't'          # 't', 't2', 'tsin' or a CSV of phi on [0, T]
    gap: float = 0.25
    T: float = 1.0
    step: float = 2.0 ** -9
    lambdas: Tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 0.0)
    refinement_ks: Tuple[int, ...] = (4, 5, 6, 7, 8, 9)

    def __post_init__(self):
        if not (self.step > 0 and self.T > 0):
            raise ValidationError("step and T must be positive", field='deconv.step')
        if not (0 <= self.gap < self.T):
            raise ValidationError("gap must lie in [0, T)", field='deconv.gap')
        if not self.lambdas or any(not (lam >= 0) for lam in self.lambdas):
            raise ValidationError("lambdas must be a nonempty list of nonnegative values", field='deconv.lambdas')


@dataclass(frozen=True)
class CounterexampleConfig:
    verdict_steps: Tuple[int, ...] = (64, 256)
    trapezoid_steps: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048, 4096)
    compare_published: bool = True

    def __post_init__(self):
        for name in ('verdict_steps', 'trapezoid_steps'):
            steps = getattr(self, name)
            if not steps or any(not (isinstance(s, int) and s >= 1) for s in steps):
                raise ValidationError(f"{name} must list positive integers", field=f'counterexample.{name}')


SECTIONS = {
    'process': ProcessConfig,
    'grid': GridConfig,
    'numerics': NumericsConfig,
    'simulate': SimulateConfig,
    'cfs': CfsConfig,
    'tube': TubeConfig,
    'deconv': DeconvConfig,
    'counterexample': CounterexampleConfig,
}


@dataclass(frozen=True)
class RunConfig:
    process: ProcessConfig = field(default_factory=ProcessConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    seed: int = 0
    output_dir: str = 'artifacts'
    threads: int = 1
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    cfs: CfsConfig = field(default_factory=CfsConfig)
    tube: TubeConfig = field(default_factory=TubeConfig)
    deconv: DeconvConfig = field(default_factory=DeconvConfig)
    counterexample: CounterexampleConfig = field(default_factory=CounterexampleConfig)

    def __post_init__(self):
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ValidationError("seed must be an integer in [0, 2^64)", field='seed')
        if not (isinstance(self.threads, int) and self.threads >= 1):
            raise ValidationError("threads must be a positive integer", field='threads')

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def default_dict() -> Dict[str, Any]:
    return RunConfig().to_dict()


def _merge(base: Dict[str, Any], update: Mapping[str, Any], prefix: str = '') -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        path = f'{prefix}{key}'
        if key not in base:
            raise ValidationError(f"unknown configuration key {path!r}", field=path)
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ValidationError(f"{path} must be an object", field=path)
            merged[key] = _merge(base[key], value, prefix=f'{path}.')
        else:
            merged[key] = value
    return merged


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _coerce(section_cls, values: Mapping[str, Any], prefix: str):
    kwargs = {}
    for f in dataclasses.fields(section_cls):
        value = _tuples(values[f.name])
        if f.type in ('float', float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        kwargs[f.name] = value
    try:
        return section_cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"malformed {prefix} section: {exc}", field=prefix) from exc


def config_from_dict(document: Mapping[str, Any]) -> RunConfig:
    """RunConfig from a (possibly partial) nested dictionary."""
    if not isinstance(document, Mapping):
        raise ValidationError("configuration must be a JSON object", field='')
    merged = _merge(default_dict(), document)
    sections = {name: _coerce(cls, merged[name], name) for name, cls in SECTIONS.items()}
    return RunConfig(seed=merged['seed'], output_dir=str(merged['output_dir']), threads=merged['threads'],
                     **sections)


def parse_assignment(assignment: str) -> Tuple[str, Any]:
    """'a.b=value' -> ('a.b', value); the value is read as JSON when possible."""
    if '=' not in assignment:
        raise ValidationError(f"expected key=value, got {assignment!r}", field=assignment)
    key, raw = assignment.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _nest(key: str, value: Any) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    node = out
    parts = key.split('.')
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def _deep_update(target: Dict[str, Any], update: Mapping[str, Any]):
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(target.get(key), dict):
            _deep_update(target[key], value)
        else:
            target[key] = value


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None, output_dir: Optional[str] = None, threads: Optional[int] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Defaults, then the JSON file, then environment variables, then flags."""
    document: Dict[str, Any] = {}
    if path is not None:
        try:
            document = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ValidationError(f"configuration file {path} not found", field='config') from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"configuration file {path} is not valid JSON: {exc}", field='config') from exc
        if not isinstance(document, dict):
            raise ValidationError("configuration must be a JSON object", field='config')

    environ = os.environ if environ is None else environ
    if environ.get(ENV_OUTPUT_DIR):
        document['output_dir'] = environ[ENV_OUTPUT_DIR]
    if environ.get(ENV_THREADS):
        try:
            document['threads'] = int(environ[ENV_THREADS])
        except ValueError as exc:
            raise ValidationError(f"{ENV_THREADS} must be an integer", field='threads') from exc

    for assignment in overrides:
        key, value = parse_assignment(assignment)
        _deep_update(document, _nest(key, value))
    for key, value in (('seed', seed), ('output_dir', output_dir), ('threads', threads)):
        if value is not None:
            document[key] = value
    return config_from_dict(document)
