"""
Run configuration: one JSON document with a section per command.

Every section is validated before any computation starts. Unknown keys are
rejected at every level and errors name the offending key path.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from ..exceptions import ConfigError
from .micro import ANCHOR_RULES

LAW_STRATEGIES = ("fast_path", "table", "pointwise")
SOLVER_METHODS = ("cg", "direct")


def _check_keys(data: Any, allowed: Sequence[str], path: str) -> Dict[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"unknown key{'s' if len(unknown) > 1 else ''}: {', '.join(prefix + k for k in unknown)}")
    return data


def _open_unit(value: Any, path: str) -> float:
    value = _number(value, path)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{path} must lie in (0, 1), got {value}")
    return value


def _positive(value: Any, path: str) -> float:
    value = _number(value, path)
    if value <= 0.0:
        raise ConfigError(f"{path} must be positive, got {value}")
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _resolution(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 2:
        raise ConfigError(f"{path} must be an integer >= 2, got {value!r}")
    return value


def _optional_resolution(value: Any, path: str) -> Optional[int]:
    return None if value is None else _resolution(value, path)


def _choice(value: Any, choices: Sequence[str], path: str) -> str:
    if value not in choices:
        raise ConfigError(f"{path} must be one of {', '.join(choices)}, got {value!r}")
    return str(value)


def _matrix(value: Any, n: int, path: str) -> Optional[List[List[float]]]:
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != n or any(not isinstance(r, list) or len(r) != n for r in value):
        raise ConfigError(f"{path} must be a {n}x{n} matrix")
    return [[_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)] for i, row in enumerate(value)]


def _point(value: Any, n: int, path: str) -> Optional[List[float]]:
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"{path} must have {n} coordinates")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


@dataclass(frozen=True)
class MaterialSection:
    resolution: Optional[int] = None
    geometry: Dict[str, Any] = field(default_factory=lambda: {"type": "homogeneous"})
    phases: List[Dict[str, Any]] = field(default_factory=lambda: [{"type": "isotropic", "lambda": 1.0, "mu": 1.0}])

    KEYS = ("resolution", "geometry", "phases")
    PHASE_KEYS = ("name", "type", "lambda", "mu", "constants", "orientation_angle")

    @classmethod
    def from_dict(cls, data: Any, path: str = "material") -> "MaterialSection":
        data = _check_keys(data, cls.KEYS, path)
        phases = data.get("phases", cls().phases)
        if not isinstance(phases, list) or not phases:
            raise ConfigError(f"{path}.phases must be a non-empty list")
        for i, phase in enumerate(phases):
            entry = _check_keys(phase, cls.PHASE_KEYS, f"{path}.phases[{i}]")
            kind = entry.get("type", "isotropic")
            _choice(kind, ("isotropic", "orthotropic"), f"{path}.phases[{i}].type")
            required = ("lambda", "mu") if kind == "isotropic" else ("constants",)
            for key in required:
                if key not in entry:
                    raise ConfigError(f"{path}.phases[{i}].{key} is required for {kind} phases")
        geometry = data.get("geometry", {"type": "homogeneous"})
        if not isinstance(geometry, dict) or "type" not in geometry:
            raise ConfigError(f"{path}.geometry must be an object with a 'type'")
        return cls(resolution=_optional_resolution(data.get("resolution"), f"{path}.resolution"),
                   geometry=dict(geometry), phases=[dict(p) for p in phases])


@dataclass(frozen=True)
class SolverSection:
    method: Optional[str] = None
    rtol: Optional[float] = None
    maxiter: Optional[int] = None
    cache_quantum: Optional[float] = None

    KEYS = ("method", "rtol", "maxiter", "cache_quantum")

    @classmethod
    def from_dict(cls, data: Any, path: str = "solver") -> "SolverSection":
        data = _check_keys(data, cls.KEYS, path)
        rtol = data.get("rtol")
        maxiter = data.get("maxiter")
        if maxiter is not None and (not isinstance(maxiter, int) or maxiter <= 0):
            raise ConfigError(f"{path}.maxiter must be a positive integer")
        quantum = data.get("cache_quantum")
        return cls(
            method=None if data.get("method") is None else _choice(data["method"], SOLVER_METHODS, f"{path}.method"),
            rtol=None if rtol is None else _open_unit(rtol, f"{path}.rtol"),
            maxiter=maxiter,
            cache_quantum=None if quantum is None else _positive(quantum, f"{path}.cache_quantum"),
        )

    def overrides(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class CellSection:
    H: Optional[List[List[float]]] = None
    K: Optional[List[List[float]]] = None
    strains: List[List[List[float]]] = field(default_factory=list)
    export_strain: bool = False

    KEYS = ("H", "K", "strains", "export_strain")

    @classmethod
    def from_dict(cls, data: Any, n: int, path: str = "cell") -> "CellSection":
        data = _check_keys(data, cls.KEYS, path)
        strains = data.get("strains", [])
        if not isinstance(strains, list):
            raise ConfigError(f"{path}.strains must be a list of matrices")
        return cls(H=_matrix(data.get("H"), n, f"{path}.H"), K=_matrix(data.get("K"), n, f"{path}.K"),
                   strains=[_matrix(s, n, f"{path}.strains[{i}]") for i, s in enumerate(strains)],
                   export_strain=bool(data.get("export_strain", False)))


@dataclass(frozen=True)
class HomogenizeSection:
    strategy: str = "fast_path"
    base_point: Optional[List[float]] = None
    axes: Optional[List[List[float]]] = None
    check_points: Optional[List[List[float]]] = None

    KEYS = ("strategy", "base_point", "axes", "check_points")

    @classmethod
    def from_dict(cls, data: Any, n: int, path: str = "homogenize") -> "HomogenizeSection":
        data = _check_keys(data, cls.KEYS, path)
        strategy = _choice(data.get("strategy", "fast_path"), LAW_STRATEGIES, f"{path}.strategy")
        axes = data.get("axes")
        if axes is not None:
            if not isinstance(axes, list) or len(axes) != n:
                raise ConfigError(f"{path}.axes needs one list of samples per dimension")
            axes = [[_number(v, f"{path}.axes[{d}]") for v in a] for d, a in enumerate(axes)]
        if strategy == "table" and axes is None:
            raise ConfigError(f"{path}.axes is required for the table strategy")
        points = data.get("check_points")
        if points is not None:
            points = [_point(p, n, f"{path}.check_points[{i}]") for i, p in enumerate(points)]
        return cls(strategy=strategy, base_point=_point(data.get("base_point"), n, f"{path}.base_point"),
                   axes=axes, check_points=points)


@dataclass(frozen=True)
class MacroSection:
    domain: Dict[str, List[float]] = field(default_factory=dict)
    resolution: Optional[int] = None
    boundary: Dict[str, Any] = field(default_factory=lambda: {"type": "zero"})
    body_force: Dict[str, Any] = field(default_factory=lambda: {"type": "sine"})
    include_residual: bool = True
    law_file: Optional[str] = None

    KEYS = ("domain", "resolution", "boundary", "body_force", "include_residual", "law_file")

    @classmethod
    def from_dict(cls, data: Any, n: int, path: str = "macro") -> "MacroSection":
        data = _check_keys(data, cls.KEYS, path)
        domain = _check_keys(data.get("domain", {"lower": [0.0] * n, "upper": [1.0] * n}),
                             ("lower", "upper"), f"{path}.domain")
        lower = _point(domain.get("lower", [0.0] * n), n, f"{path}.domain.lower")
        upper = _point(domain.get("upper", [1.0] * n), n, f"{path}.domain.upper")
        if any(u <= lo for lo, u in zip(lower, upper)):
            raise ConfigError(f"{path}.domain.upper must exceed lower in every coordinate")
        for key in ("boundary", "body_force"):
            if key in data and (not isinstance(data[key], dict) or "type" not in data[key]):
                raise ConfigError(f"{path}.{key} must be an object with a 'type'")
        return cls(domain={"lower": lower, "upper": upper},
                   resolution=_optional_resolution(data.get("resolution"), f"{path}.resolution"),
                   boundary=dict(data.get("boundary", {"type": "zero"})),
                   body_force=dict(data.get("body_force", {"type": "sine"})),
                   include_residual=bool(data.get("include_residual", True)),
                   law_file=data.get("law_file"))


@dataclass(frozen=True)
class DirectSection:
    epsilon: float = 0.125
    r: float = 0.6
    anchor_rule: str = "center"
    resolution: Optional[int] = None
    elements_per_period: Optional[int] = None

    KEYS = ("epsilon", "r", "anchor_rule", "resolution", "elements_per_period")

    @classmethod
    def from_dict(cls, data: Any, path: str = "direct") -> "DirectSection":
        data = _check_keys(data, cls.KEYS, path)
        resolution = data.get("resolution")
        per_period = data.get("elements_per_period")
        if per_period is not None and (isinstance(per_period, bool) or not isinstance(per_period, int)
                                       or per_period < 1):
            raise ConfigError(f"{path}.elements_per_period must be a positive integer")
        return cls(epsilon=_open_unit(data.get("epsilon", 0.125), f"{path}.epsilon"),
                   r=_open_unit(data.get("r", 0.6), f"{path}.r"),
                   anchor_rule=_choice(data.get("anchor_rule", "center"), ANCHOR_RULES, f"{path}.anchor_rule"),
                   resolution=_optional_resolution(resolution, f"{path}.resolution"),
                   elements_per_period=per_period)


@dataclass(frozen=True)
class ConvergeSection:
    epsilons: List[float] = field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    r: float = 0.6
    anchor_rule: str = "center"
    max_resolution: Optional[int] = None
    time_budget_seconds: Optional[float] = None
    plot: bool = False

    KEYS = ("epsilons", "r", "anchor_rule", "max_resolution", "time_budget_seconds", "plot")

    @classmethod
    def from_dict(cls, data: Any, path: str = "converge") -> "ConvergeSection":
        data = _check_keys(data, cls.KEYS, path)
        epsilons = data.get("epsilons", cls().epsilons)
        if not isinstance(epsilons, list) or not epsilons:
            raise ConfigError(f"{path}.epsilons must be a non-empty list")
        values = [_open_unit(e, f"{path}.epsilons[{i}]") for i, e in enumerate(epsilons)]
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ConfigError(f"{path}.epsilons must be strictly decreasing")
        budget = data.get("time_budget_seconds")
        anchor_rule = _choice(data.get("anchor_rule", "center"), ANCHOR_RULES[:2], f"{path}.anchor_rule")
        return cls(epsilons=values, r=_open_unit(data.get("r", 0.6), f"{path}.r"), anchor_rule=anchor_rule,
                   max_resolution=_optional_resolution(data.get("max_resolution"), f"{path}.max_resolution"),
                   time_budget_seconds=None if budget is None else _positive(budget, f"{path}.time_budget_seconds"),
                   plot=bool(data.get("plot", False)))


@dataclass(frozen=True)
class VerifySection:
    include_convergence: bool = False
    discretization_tolerance: Optional[float] = None
    resolution: int = 32
    acceptance: Dict[str, Any] = field(default_factory=dict)

    KEYS = ("include_convergence", "discretization_tolerance", "resolution", "acceptance")

    @classmethod
    def from_dict(cls, data: Any, path: str = "verify") -> "VerifySection":
        data = _check_keys(data, cls.KEYS, path)
        tolerance = data.get("discretization_tolerance")
        acceptance = data.get("acceptance", {})
        _check_keys(acceptance, ("epsilons", "r", "resolution", "moduli", "rotation_gradient", "max_resolution",
                                 "time_budget_seconds", "final_ratio", "h1_band", "floor"), f"{path}.acceptance")
        return cls(include_convergence=bool(data.get("include_convergence", False)),
                   discretization_tolerance=None if tolerance is None else _positive(
                       tolerance, f"{path}.discretization_tolerance"),
                   resolution=_resolution(data.get("resolution", 32), f"{path}.resolution"),
                   acceptance=dict(acceptance))


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    dimension: int = 2
    seed: int = 0
    output_dir: str = "results"
    material: MaterialSection = field(default_factory=MaterialSection)
    fields: Dict[str, Any] = field(default_factory=dict)
    solver: SolverSection = field(default_factory=SolverSection)
    cell: CellSection = field(default_factory=CellSection)
    homogenize: HomogenizeSection = field(default_factory=HomogenizeSection)
    macro: MacroSection = field(default_factory=MacroSection)
    direct: DirectSection = field(default_factory=DirectSection)
    converge: ConvergeSection = field(default_factory=ConvergeSection)
    verify: VerifySection = field(default_factory=VerifySection)

    KEYS = ("dimension", "seed", "output_dir", "material", "fields", "solver", "cell", "homogenize", "macro",
            "direct", "converge", "verify")
    FIELD_KEYS = ("H", "K", "L", "M")

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        data = _check_keys(data, cls.KEYS, "")
        n = data.get("dimension", 2)
        if n not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {n!r}")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        fields = _check_keys(data.get("fields", {}), cls.FIELD_KEYS, "fields")
        for name, descriptor in fields.items():
            if descriptor is not None and (not isinstance(descriptor, dict) or "type" not in descriptor):
                raise ConfigError(f"fields.{name} must be an object with a 'type'")
        return cls(
            dimension=n,
            seed=seed,
            output_dir=str(data.get("output_dir", "results")),
            material=MaterialSection.from_dict(data.get("material")),
            fields=dict(fields),
            solver=SolverSection.from_dict(data.get("solver")),
            cell=CellSection.from_dict(data.get("cell"), n),
            homogenize=HomogenizeSection.from_dict(data.get("homogenize"), n),
            macro=MacroSection.from_dict(data.get("macro"), n),
            direct=DirectSection.from_dict(data.get("direct")),
            converge=ConvergeSection.from_dict(data.get("converge")),
            verify=VerifySection.from_dict(data.get("verify")),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def __repr__(self) -> str:
        return f"<RunConfig(dimension={self.dimension}, seed={self.seed}, output_dir='{self.output_dir}')>"
