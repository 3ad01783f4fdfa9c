"""
Experiment configuration: one JSON file describing a run.

Every block is parsed into a dataclass whose __post_init__ validates its
ranges; failures raise ConfigError naming the field path (params.alpha,
grid.spacing, targets[1], ...).
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.errors import ConfigError, DomainError
from src.geometry.domain import Domain
from src.stable.params import QuadratureConfig, StableParams

logger = logging.getLogger(__name__)

BASE_KERNELS = ('free', 'envelope', 'monte_carlo')
REFINEMENTS = ('time', 'space')


def _positive(path: str, value: Any) -> None:
    if not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(path, f"expected a positive number, got {value!r}")


def _unknown_keys(path: str, data: Dict[str, Any], known: Sequence[str]) -> None:
    extra = sorted(set(data) - set(known))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", f"unknown key (allowed: {sorted(known)})")


@dataclass
class GridSettings:
    """Space-time grid of the series (see GridSpec.build)."""
    half_width: float = 6.0
    spacing: float = 0.1875
    horizon: float = 0.5
    n_times: int = 11
    t_min_fraction: float = 2.0 ** -10
    n_panels: int = 8
    gl_order: int = 4
    eps_tail: float = 0.05
    refinement: str = 'time'

    def __post_init__(self):
        """Validate grid ranges after initialization."""
        for name in ('half_width', 'spacing', 'horizon', 't_min_fraction', 'eps_tail'):
            _positive(f'grid.{name}', getattr(self, name))
        if self.spacing >= self.half_width:
            raise ConfigError('grid.spacing', f"{self.spacing} must be below half_width {self.half_width}")
        if not self.t_min_fraction < 1.0:
            raise ConfigError('grid.t_min_fraction', f"{self.t_min_fraction} must lie in (0, 1)")
        if int(self.n_times) != self.n_times or self.n_times < 2:
            raise ConfigError('grid.n_times', f"need an integer of at least 2, got {self.n_times}")
        for name in ('n_panels', 'gl_order'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f'grid.{name}', f"need a positive integer, got {value}")
        if self.refinement not in REFINEMENTS:
            raise ConfigError('grid.refinement', f"'{self.refinement}' not one of {REFINEMENTS}")

    def build_kwargs(self) -> Dict[str, Any]:
        return {'half_width': self.half_width, 'spacing': self.spacing, 'horizon': self.horizon,
                'n_times': int(self.n_times), 't_min_fraction': self.t_min_fraction,
                'n_panels': int(self.n_panels), 'gl_order': int(self.gl_order),
                'eps_tail': self.eps_tail}


@dataclass
class MonteCarloSettings:
    """Path simulation block; times used for histograms are the grid times rounded to dt."""
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    block_size: int = 10_000
    min_hits: int = 20
    drift_cap: Optional[float] = None
    caps: List[float] = field(default_factory=lambda: [1.0, 4.0, 16.0])
    n_harnack_points: int = 6

    def __post_init__(self):
        """Validate simulation ranges after initialization."""
        _positive('montecarlo.dt', self.dt)
        for name in ('n_paths', 'block_size', 'min_hits', 'n_harnack_points'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f'montecarlo.{name}', f"need a positive integer, got {value}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError('montecarlo.seed', f"need a non-negative integer, got {self.seed}")
        if self.drift_cap is not None:
            _positive('montecarlo.drift_cap', self.drift_cap)
        for i, cap in enumerate(self.caps):
            _positive(f'montecarlo.caps[{i}]', cap)

    def path_settings(self) -> Dict[str, Any]:
        """Keyword arguments of PathConfig."""
        return {'dt': self.dt, 'n_paths': int(self.n_paths), 'block_size': int(self.block_size),
                'seed': int(self.seed), 'min_hits': int(self.min_hits), 'drift_cap': self.drift_cap}


@dataclass
class SeriesSettings:
    """Base kernel and truncation of the Duhamel series."""
    base: Optional[str] = None
    k_max: int = 6
    tol: float = 1e-4
    slack: float = 0.2

    def __post_init__(self):
        """Validate series settings after initialization."""
        if self.base is not None and self.base not in BASE_KERNELS:
            raise ConfigError('series.base', f"'{self.base}' not one of {BASE_KERNELS}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigError('series.k_max', f"need a positive integer, got {self.k_max}")
        _positive('series.tol', self.tol)
        if self.slack < 0:
            raise ConfigError('series.slack', f"{self.slack} must be non-negative")


@dataclass
class CheckSpec:
    """One requested check; options are passed to the check job."""
    id: str
    tolerance: Optional[float] = None
    options: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'id': self.id, 'tolerance': self.tolerance, 'options': self.options}


def _parse_checks(raw: Any) -> List[CheckSpec]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError('checks', "expected a non-empty list of checks")
    checks = []
    for i, item in enumerate(raw):
        if isinstance(item, str):
            item = {'id': item}
        if not isinstance(item, dict) or not isinstance(item.get('id'), str):
            raise ConfigError(f'checks[{i}].id', "each check needs a string id")
        _unknown_keys(f'checks[{i}]', item, ('id', 'tolerance', 'options'))
        tolerance = item.get('tolerance')
        if tolerance is not None and not isinstance(tolerance, (int, float)):
            raise ConfigError(f'checks[{i}].tolerance', f"expected a number, got {tolerance!r}")
        checks.append(CheckSpec(id=item['id'], tolerance=tolerance,
                                options=dict(item.get('options', {}))))
    ids = [c.id for c in checks]
    duplicate = next((c for c in ids if ids.count(c) > 1), None)
    if duplicate:
        raise ConfigError('checks', f"check '{duplicate}' requested twice")
    return checks


def _block(cls, path: str, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(path, str(e))


@dataclass
class ExperimentConfig:
    """
    A validated run description.

    Attributes:
        params: stable parameters, 1 < alpha < 2
        domain: D (whole space when the file has "domain": null)
        drift: drift catalog entry ({"name": ..., parameters})
        grid: series grid settings
        montecarlo: path simulation settings
        series: base kernel and truncation
        checks: requested checks in file order
        quadrature: accuracy of every adaptive quadrature
        targets: anchor points of the tabulated fields
        sweep: sample size and seed of the envelope sweeps
        output_dir: where manifests and tables go
        require_coverage: refuse to summarize unless every theorem item has a report
    """
    params: StableParams
    domain: Domain
    drift: Dict[str, Any]
    grid: GridSettings = field(default_factory=GridSettings)
    montecarlo: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    series: SeriesSettings = field(default_factory=SeriesSettings)
    checks: List[CheckSpec] = field(default_factory=list)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    targets: List[List[float]] = field(default_factory=list)
    sweep: Dict[str, int] = field(default_factory=lambda: {'n': 2000, 'seed': 0})
    output_dir: str = 'runs'
    require_coverage: bool = False
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    KEYS = ('params', 'domain', 'drift', 'grid', 'montecarlo', 'series', 'checks',
            'quadrature', 'targets', 'sweep', 'output_dir', 'require_coverage')

    def __post_init__(self):
        """Validate cross-field constraints after initialization."""
        if not (1.0 < self.params.alpha < 2.0):
            raise ConfigError('params.alpha', f"{self.params.alpha} outside (1, 2)")
        if not self.domain.admissible_for(self.params.alpha):
            raise ConfigError('domain.theta', f"smoothness {self.domain.theta} must exceed "
                                              f"alpha/2 = {self.params.alpha / 2}")
        if self.series.base == 'free' and not self.domain.is_whole_space:
            raise ConfigError('series.base', "the free base kernel needs the whole space")
        if not self.targets:
            self.targets = [self.default_target()]
        for i, y in enumerate(self.targets):
            if len(y) != self.params.d:
                raise ConfigError(f'targets[{i}]', f"expected {self.params.d} coordinates, got {len(y)}")
            if not self.domain.contains(np.asarray(y, dtype=float)):
                raise ConfigError(f'targets[{i}]', f"{list(y)} lies outside the domain")
            if np.max(np.abs(y)) > self.grid.half_width / 3.0:
                raise ConfigError(f'targets[{i}]', f"{list(y)} is too close to the grid box faces")

    def default_target(self) -> List[float]:
        if self.domain.kind == 'ball':
            return list(self.domain.center)
        if self.domain.kind == 'half_space':
            return (np.asarray(self.domain.normal) * (self.domain.offset + 1.0)).tolist()
        return [0.0] * self.params.d

    @property
    def base_kernel(self) -> str:
        """Configured base kernel, defaulting to free (whole space) or envelope."""
        if self.series.base is not None:
            return self.series.base
        return 'free' if self.domain.is_whole_space else 'envelope'

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        """Parse and validate a configuration mapping."""
        if not isinstance(data, dict):
            raise ConfigError('<root>', "the configuration must be a JSON object")
        _unknown_keys('<root>', data, cls.KEYS)
        raw_params = data.get('params')
        if not isinstance(raw_params, dict):
            raise ConfigError('params', "missing {d, alpha} block")
        _unknown_keys('params', raw_params, ('d', 'alpha'))
        d, alpha = raw_params.get('d'), raw_params.get('alpha')
        if not isinstance(d, int) or d < 2:
            raise ConfigError('params.d', f"need an integer dimension of at least 2, got {d!r}")
        if not isinstance(alpha, (int, float)) or not (1.0 < alpha < 2.0):
            raise ConfigError('params.alpha', f"{alpha!r} outside (1, 2)")
        params = StableParams(d=d, alpha=float(alpha))
        try:
            domain = Domain.from_dict(data.get('domain'), d)
        except (DomainError, TypeError, KeyError) as e:
            raise ConfigError('domain', str(e))
        if domain.dim != d:
            raise ConfigError('domain', f"geometry has {domain.dim} coordinates, params.d is {d}")
        drift = data.get('drift', {'name': 'zero'})
        if not isinstance(drift, dict) or 'name' not in drift:
            raise ConfigError('drift.name', "the drift block needs a catalog name")
        try:
            quadrature = QuadratureConfig.from_dict(data.get('quadrature'))
        except (DomainError, TypeError) as e:
            raise ConfigError('quadrature', str(e))
        sweep = {'n': 2000, 'seed': 0, **data.get('sweep', {})}
        _unknown_keys('sweep', sweep, ('n', 'seed'))
        targets = data.get('targets', [])
        if not isinstance(targets, list):
            raise ConfigError('targets', "expected a list of points")
        output_dir = data.get('output_dir', 'runs')
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError('output_dir', f"expected a directory name, got {output_dir!r}")
        config = cls(
            params=params,
            domain=domain,
            drift=dict(drift),
            grid=_block(GridSettings, 'grid', data.get('grid')),
            montecarlo=_block(MonteCarloSettings, 'montecarlo', data.get('montecarlo')),
            series=_block(SeriesSettings, 'series', data.get('series')),
            checks=_parse_checks(data.get('checks')),
            quadrature=quadrature,
            targets=[list(map(float, y)) for y in targets],
            sweep={k: int(v) for k, v in sweep.items()},
            output_dir=output_dir,
            require_coverage=bool(data.get('require_coverage', False)),
            raw=data,
        )
        logger.debug(f"Parsed configuration {config.hash_prefix}: {len(config.checks)} checks")
        return config

    @classmethod
    def from_json(cls, path: str) -> 'ExperimentConfig':
        """Load a configuration file."""
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError('<file>', f"{path} not found")
        except json.JSONDecodeError as e:
            raise ConfigError('<file>', f"{path} is not valid JSON: {e}")
        return cls.from_dict(data)

    def canonical(self) -> str:
        """The raw configuration as canonical JSON (sorted keys, no whitespace)."""
        return json.dumps(self.raw, sort_keys=True, separators=(',', ':'))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode('utf-8')).hexdigest()

    @property
    def hash_prefix(self) -> str:
        return self.config_hash[:12]

    def check(self, check_id: str) -> Optional[CheckSpec]:
        return next((c for c in self.checks if c.id == check_id), None)

    def seeds(self) -> Dict[str, int]:
        return {'montecarlo': int(self.montecarlo.seed), 'sweep': int(self.sweep['seed'])}

    def to_dict(self) -> Dict[str, Any]:
        """Convert the configuration to its validated dictionary form."""
        return {
            'params': self.params.to_dict(),
            'domain': self.domain.to_dict(),
            'drift': self.drift,
            'grid': self.grid.build_kwargs(),
            'series': {'base': self.base_kernel, 'k_max': self.series.k_max,
                       'tol': self.series.tol, 'slack': self.series.slack},
            'montecarlo': {**self.montecarlo.path_settings(), 'caps': self.montecarlo.caps},
            'checks': [c.to_dict() for c in self.checks],
            'quadrature': self.quadrature.to_dict(),
            'targets': self.targets,
            'output_dir': self.output_dir,
        }
