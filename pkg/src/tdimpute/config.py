"""TOML run configuration: parsing, validation, and seed derivation.

One top-level seed drives every stochastic component; per-component seeds
are derived by hashing a namespace string, so adding a component never
shifts another one's stream.
"""

import hashlib
import sys
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .imputers import ImputerSpec
from .predict import CvConfig, TaskConfig
from .synth import SyntheticConfig
from .tdi import TdiSpec, WeightConfig


def derive_seed(master: int, namespace: str) -> int:
    digest = hashlib.sha256(f"{master}:{namespace}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


class RunConfig:
    """Validated view over one parsed config document."""

    def __init__(self, doc: dict, seed_override: Optional[int] = None):
        self.doc = doc
        self.seed = int(seed_override if seed_override is not None
                        else doc.get("seed", 0))

    def _section(self, name) -> dict:
        value = self.doc.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"[{name}] must be a table")
        return value

    def input_path(self, key="data") -> Path:
        section = self._section("input")
        if key not in section:
            raise ConfigError(f"[input].{key} is required for this command")
        path = Path(section[key])
        if not path.exists():
            raise ConfigError(f"input file not found: {path}")
        return path

    def optional_input(self, key) -> Optional[Path]:
        section = self._section("input")
        if key not in section:
            return None
        path = Path(section[key])
        if not path.exists():
            raise ConfigError(f"input file not found: {path}")
        return path

    @property
    def grid_hours(self) -> float:
        value = float(self._section("preprocess").get("grid_hours", 1.0))
        if value <= 0:
            raise ConfigError("grid_hours must be > 0")
        return value

    @property
    def standardize(self) -> bool:
        return bool(self._section("preprocess").get("standardize", False))

    @property
    def subsample_patients(self) -> Optional[int]:
        value = self._section("preprocess").get("subsample_patients")
        return None if value is None else int(value)

    def imputer_specs(self):
        specs = []
        for entry in self.doc.get("imputers", []):
            if not isinstance(entry, dict):
                raise ConfigError("[[imputers]] entries must be tables")
            specs.append(ImputerSpec.from_dict(entry))
        return specs

    def tdi_spec(self) -> TdiSpec:
        section = self._section("tdi")
        weight_cfg = section.get("weight", {})
        weight = WeightConfig(
            family=weight_cfg.get("family", "reciprocal"),
            constant_value=float(weight_cfg.get("constant_value", 1.0)),
        )
        iterative_cfg = dict(section.get("iterative", {}))
        iterative_cfg.setdefault("kind", "iterative")
        seed = section.get("seed", derive_seed(self.seed, "tdi"))
        return TdiSpec(
            weight=weight,
            iterative=ImputerSpec.from_dict(iterative_cfg),
            seed=int(seed),
        )

    @property
    def m(self) -> int:
        return int(self._section("tdi").get("m", 1))

    @property
    def masking_p(self) -> float:
        p = float(self._section("masking").get("p", 0.1))
        if not 0 < p <= 1:
            raise ConfigError("masking p must lie in (0, 1]")
        return p

    def cv_config(self) -> CvConfig:
        section = self._section("cv")
        return CvConfig(
            n_folds=int(section.get("n_folds", 5)),
            seed=derive_seed(self.seed, "cv"),
            stratified=bool(section.get("stratified", True)),
        )

    def task_config(self) -> TaskConfig:
        section = self._section("task")
        return TaskConfig(
            window_hours=float(section.get("window_hours", 48.0)),
            n_obs=int(section.get("n_obs", 2)),
            min_timepoints=int(section.get("min_timepoints", 3)),
            l2_alpha=float(section.get("l2_alpha", 1e-2)),
            max_iter=int(section.get("max_iter", 200)),
            tol=float(section.get("tol", 1e-6)),
        )

    def synthetic_config(self) -> SyntheticConfig:
        section = self._section("synthetic")
        required = ("n_patients", "n_timepoints", "n_variables")
        for key in required:
            if key not in section:
                raise ConfigError(f"[synthetic].{key} is required")
        profile = section.get("missing_profile", 0.0)
        return SyntheticConfig(
            n_patients=int(section["n_patients"]),
            n_timepoints=int(section["n_timepoints"]),
            n_variables=int(section["n_variables"]),
            temporal_corr=float(section.get("temporal_corr", 0.0)),
            cross_corr=float(section.get("cross_corr", 0.0)),
            missing_profile=profile,
            seed=derive_seed(self.seed, "synthetic"),
        )
