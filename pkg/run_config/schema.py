import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from background.family import SmoothFamily, bump
from background.geometry import BackgroundGeometry, flat_geometry
from background.lattice import LatticeSpace, build_lattice
from background.matrix_io import read_matrix_csv
from common.errors import ConfigError
from common.settings import DEFAULT_TOLERANCES

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"background", "parametrix", "task", "seed", "output_dir", "tolerances"}
BACKGROUND_KEYS = {"dim", "kind", "extent", "n", "refinement", "A", "c", "c_field_file", "metric", "family"}
FAMILY_KEYS = {"kind", "center", "radius", "amplitude", "power"}
PARAMETRIX_KEYS = {"nu", "order", "kind", "fit_order"}
TASK_KEYS = {"checks", "k", "lambda_order", "s_order", "spacings", "lambdas", "samples", "step"}

FAMILY_KINDS = ("mass", "gauge", "conformal")
PARAMETRIX_KINDS = ("exact", "hadamard")


def _reject_unknown(block, allowed, where):
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; allowed: {sorted(allowed)}")


@dataclass(frozen=True)
class FamilySpec:
    kind: str = "mass"
    center: List[int] = field(default_factory=list)
    radius: float = 1.0
    amplitude: float = 1.0
    power: int = 1


@dataclass(frozen=True)
class BackgroundSpec:
    dim: int = 2
    kind: str = "flat-torus"
    extent: List[float] = field(default_factory=lambda: [4.0, 4.0])
    n: int = 8
    refinement: List[int] = field(default_factory=list)
    A: List[float] = field(default_factory=list)
    c: float = 1.0
    c_field_file: Optional[str] = None
    metric: Optional[List[List[float]]] = None
    family: Optional[FamilySpec] = None


@dataclass(frozen=True)
class ParametrixSpec:
    nu: Optional[float] = None
    order: int = 2
    kind: str = "exact"
    fit_order: int = 2


@dataclass(frozen=True)
class TaskSpec:
    checks: List[str] = field(default_factory=list)
    k: int = 2
    lambda_order: int = 2
    s_order: int = 2
    spacings: List[float] = field(default_factory=list)
    lambdas: List[float] = field(default_factory=list)
    samples: int = 100_000
    step: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; every report carries its hash."""

    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    parametrix: ParametrixSpec = field(default_factory=ParametrixSpec)
    task: TaskSpec = field(default_factory=TaskSpec)
    seed: int = 0
    output_dir: str = "output"
    tolerances: dict = field(default_factory=dict)

    # ------------------------------------------------------------

    def to_dict(self):
        return asdict(self)

    @property
    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def tolerance(self, name):
        if name in self.tolerances:
            return float(self.tolerances[name])
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"no tolerance named {name!r}")
        return DEFAULT_TOLERANCES[name]

    def geometry(self) -> BackgroundGeometry:
        bg = self.background
        N = bg.n ** bg.dim
        c = bg.c
        if bg.c_field_file:
            c = read_matrix_csv(bg.c_field_file).ravel()
            if c.size != N:
                raise ConfigError(f"c_field_file holds {c.size} values, the lattice has {N} sites")
        A = np.asarray(bg.A, dtype=float) if bg.A else None
        metric = np.asarray(bg.metric, dtype=float) if bg.metric is not None else None
        return flat_geometry(bg.dim, bg.extent, mass_squared=c, kind=bg.kind, covector_A=A, metric=metric)

    def lattice(self, n=None) -> LatticeSpace:
        return build_lattice(self.geometry(), self.background.n if n is None else n)

    def family(self, lattice: LatticeSpace) -> Optional[SmoothFamily]:
        fam = self.background.family
        if fam is None:
            return None
        center = fam.center or [lattice.sites_per_axis // 2] * lattice.dim
        profile = bump(lattice, center, fam.radius, fam.amplitude)
        support = profile != 0.0
        terms = {}
        if fam.kind == "mass":
            terms["c_terms"] = {fam.power: profile}
        elif fam.kind == "gauge":
            terms["A_terms"] = {fam.power: np.repeat(profile[:, None], lattice.dim, axis=1)}
        else:
            terms["conformal_terms"] = {fam.power: profile}
        return SmoothFamily(self.geometry(), lattice, support, **terms)


# ------------------------------------------------------------
# loading
# ------------------------------------------------------------

def _build(block, cls, allowed, where):
    if block is None:
        return cls()
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a table, got {type(block).__name__}")
    _reject_unknown(block, allowed, where)
    return cls(**block)


def config_from_dict(raw: dict) -> RunConfig:
    _reject_unknown(raw, TOP_LEVEL_KEYS, "config")

    background = dict(raw.get("background") or {})
    _reject_unknown(background, BACKGROUND_KEYS, "background")
    family = background.pop("family", None)
    family_spec = _build(family, FamilySpec, FAMILY_KEYS, "background.family") if family is not None else None
    if family_spec is not None and family_spec.kind not in FAMILY_KINDS:
        raise ConfigError(f"family kind {family_spec.kind!r} is not one of {FAMILY_KINDS}")
    background_spec = BackgroundSpec(**background, family=family_spec)
    if background_spec.n < 2:
        raise ConfigError(f"background.n must be >= 2, got {background_spec.n}")
    if len(background_spec.extent) != background_spec.dim:
        raise ConfigError(f"extent has {len(background_spec.extent)} entries for dim {background_spec.dim}")

    parametrix = _build(raw.get("parametrix"), ParametrixSpec, PARAMETRIX_KEYS, "parametrix")
    if parametrix.kind not in PARAMETRIX_KINDS:
        raise ConfigError(f"parametrix kind {parametrix.kind!r} is not one of {PARAMETRIX_KINDS}")
    if parametrix.nu is not None and parametrix.nu <= 0:
        raise ConfigError(f"parametrix.nu must be positive, got {parametrix.nu}")

    task = _build(raw.get("task"), TaskSpec, TASK_KEYS, "task")

    tolerances = dict(raw.get("tolerances") or {})
    for name in tolerances:
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {name!r}")

    return RunConfig(
        background=background_spec,
        parametrix=parametrix,
        task=task,
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "output")),
        tolerances=tolerances,
    )


def load_config(path) -> RunConfig:
    """Read a JSON or TOML run configuration."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    extension = os.path.splitext(path)[1].lower()
    if extension == ".toml":
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    elif extension == ".json":
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    else:
        raise ConfigError(f"config must be .json or .toml, got {extension!r}")
    config = config_from_dict(raw)
    logger.debug(f"loaded {path}: hash {config.config_hash[:12]}")
    return config
