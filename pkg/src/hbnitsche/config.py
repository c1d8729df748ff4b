"""Run configuration with strict validation and INI-file loading."""
import configparser
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Tuple

from . import problems


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "adaptive"  # adaptive | uniform
    degree: int = 2
    m: int = 2  # admissibility class
    gamma1: float = 100.0
    gamma2: float = 100.0
    theta: float = 0.5
    order: Optional[int] = None  # Gauss points per direction, default degree + 2
    solver_tol: float = 1e-10
    direct_limit: int = 50_000
    problem: Optional[str] = "smooth"  # manufactured solution id
    source: Optional[str] = None  # expression for f when no exact solution is known
    report_error: bool = True
    initial_level: int = 1
    levels: Tuple[int, int] = (2, 5)  # first and last level of a uniform study
    max_iter: int = 20
    max_dofs: int = 100_000
    eta_tol: float = 0.0
    c_est: float = 1.0
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in ("adaptive", "uniform"):
            raise ConfigError(f"mode must be 'adaptive' or 'uniform', got {self.mode!r}")
        if self.degree < 2:
            raise ConfigError(f"degree must be >= 2, got {self.degree}")
        if self.m < 2:
            raise ConfigError(f"admissibility class m must be >= 2, got {self.m}")
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ConfigError(f"gamma1 and gamma2 must be positive, got {self.gamma1}, {self.gamma2}")
        if not (0 < self.theta <= 1):
            raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
        if self.order is not None and self.order < self.degree + 1:
            raise ConfigError(f"quadrature order {self.order} too low for degree {self.degree}")
        if self.solver_tol <= 0:
            raise ConfigError("solver_tol must be positive")
        if (self.problem is None) == (self.source is None):
            raise ConfigError("exactly one of 'problem' (manufactured solution) or 'source' (expression for f) is required")
        if self.problem is not None and self.problem not in problems.REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}; known: {sorted(problems.REGISTRY)}")
        if self.report_error and self.problem is None:
            raise ConfigError("report_error needs an exact solution: set 'problem' or disable error reporting")
        lo, hi = self.levels
        if not (0 <= lo <= hi):
            raise ConfigError(f"levels must satisfy 0 <= first <= last, got {self.levels}")
        if self.initial_level < 0 or self.max_iter < 1 or self.max_dofs < 1 or self.eta_tol < 0 or self.c_est < 0:
            raise ConfigError("initial_level, max_iter, max_dofs, eta_tol and c_est must be nonnegative (iterations and dofs positive)")

    @property
    def quad_order(self) -> int:
        return self.degree + 2 if self.order is None else self.order

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def as_dict(self):
        return asdict(self)

    def source_function(self):
        """f(x, y) and the exact solution (or None)."""
        if self.problem is not None:
            exact = problems.get(self.problem)
            return exact.f, exact
        return problems.source(self.source).f, None


_FIELDS = {f.name: f for f in fields(RunConfig)}
_SECTIONS = {
    "run": ("mode", "output_dir", "report_error", "max_iter", "max_dofs", "eta_tol", "initial_level", "levels", "c_est"),
    "discretization": ("degree", "m", "gamma1", "gamma2", "order"),
    "marking": ("theta",),
    "solver": ("solver_tol", "direct_limit"),
    "problem": ("problem", "source"),
}


def _convert(name, text):
    text = text.strip()
    if name in ("order", "problem", "source", "output_dir") and text.lower() in ("", "none"):
        return None
    if name in ("degree", "m", "order", "direct_limit", "max_iter", "max_dofs", "initial_level"):
        return int(text)
    if name in ("gamma1", "gamma2", "theta", "solver_tol", "eta_tol", "c_est"):
        return float(text)
    if name == "report_error":
        low = text.lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ConfigError(f"report_error: not a boolean: {text!r}")
        return low in ("true", "yes", "1", "on")
    if name == "levels":
        parts = text.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigError(f"levels needs two integers, got {text!r}")
        return (int(parts[0]), int(parts[1]))
    return text


def parse_config(text: str, base: RunConfig = None) -> RunConfig:
    """Parse INI text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; known: {sorted(_SECTIONS)}")
        for key, raw in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {list(_SECTIONS[section])}")
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if "source" in values and "problem" not in values:
        values["problem"] = None
    base = base or RunConfig()
    return replace(base, **values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    d = cfg.as_dict()
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = d[k]
            if isinstance(v, tuple):
                v = " ".join(map(str, v))
            lines.append(f"{k} = {'none' if v is None else v}")
        lines.append("")
    return "\n".join(lines)
