"""Flat JSON run configuration shared by every CLI command.

One JSON object holds simulation, model, design and I/O settings. The
document is validated against a schema before anything runs; unknown keys
are rejected and every error names the field and its line in the file.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import jsonschema

from .covariogram import Covariogram
from .designs import DesignKind
from .errors import ConfigError
from .metrics import DEFAULT_ALPHA
from .params import Theta
from .sampler import (
    DEFAULT_K,
    DEFAULT_PHI_SUPPORT,
    DEFAULT_PRIOR_SCALE,
    DEFAULT_PRIOR_SHAPE,
    GAUSSIAN_DET_EXPONENT,
    ModelConfig,
    PredictionTarget,
)
from .simulator import DEFAULT_M, SimConfig

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int0 = {"type": "integer", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_path = {"type": ["string", "null"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _int0,
        "out_dir": {"type": "string"},
        "data": _path,
        "truth": _path,
        "fit_dir": _path,
        "chains": _int1,
        # simulation
        "rows": _int1,
        "cols": _int1,
        "extent": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "phi_true": _pos,
        "sigma2_true": {"type": "number", "minimum": 0},
        "beta_true": {"type": "array", "items": _num, "minItems": 1},
        "covariates": {"enum": ["uniform", "file"]},
        "covariate_file": _path,
        "snr": _pos,
        "M": _int1,
        "missing_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "block": {"type": ["array", "null"], "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
        "strata": {"type": ["string", "integer", "null"]},
        # model
        "n": _int1,
        "G": _int1,
        "K": _int1,
        "burn_in": _int0,
        "covariogram": {"enum": [c.value for c in Covariogram]},
        "phi_support": {"type": "array", "items": _pos, "minItems": 1},
        "prior_shape": _pos,
        "prior_scale": _pos,
        "design": {"enum": [d.value for d in DesignKind]},
        "allocations": {"type": ["object", "null"], "additionalProperties": {"type": "integer", "minimum": 0}},
        "prediction_target": {"enum": [t.value for t in PredictionTarget]},
        "det_exponent": _pos,
        "init": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "array", "items": _num},
                "tau2": _pos,
                "sigma2": _pos,
                "sigma_beta2": _pos,
                "phi": _pos,
            },
        },
        "targets": {"oneOf": [{"enum": ["missing", "all"]}, {"type": "array", "items": _int0}]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        # sweep / diagnose
        "n_list": {"type": "array", "items": _int1, "minItems": 1},
        "designs": {"type": "array", "items": {"enum": [d.value for d in DesignKind]}, "minItems": 1},
        "k_list": {"type": "array", "items": _int1, "minItems": 1},
        "replicates": _int1,
        # properties
        "theta_beta": {"type": "array", "items": _num, "minItems": 1},
        "theta_tau2": _pos,
        "theta_sigma2": _pos,
        "theta_phi": _pos,
        "true_mean": _num,
        "true_sill": _pos,
        "true_nugget": {"type": "number", "minimum": 0},
        "true_phi": _pos,
        "population": _int1,
        "strata_sizes": {"type": "array", "items": _int1, "minItems": 1},
        "lag_max": _pos,
        "lag_points": {"type": "integer", "minimum": 2},
        "drop_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    data: str | None = None
    truth: str | None = None
    fit_dir: str | None = None
    chains: int = 1
    rows: int = 100
    cols: int = 100
    extent: tuple = (0.0, 1.0, 0.0, 1.0)
    phi_true: float = 3.0
    sigma2_true: float = 1.0
    beta_true: tuple = (2.0, 3.0)
    covariates: str = "uniform"
    covariate_file: str | None = None
    snr: float = 3.0
    M: int = DEFAULT_M
    missing_fraction: float = 0.2
    block: tuple | None = (0, 25, 0, 40)
    strata: str | int | None = "quadrant"
    n: int = 100
    G: int = 10_000
    K: int = DEFAULT_K
    burn_in: int = 2_000
    covariogram: str = "exponential"
    phi_support: tuple = DEFAULT_PHI_SUPPORT
    prior_shape: float = DEFAULT_PRIOR_SHAPE
    prior_scale: float = DEFAULT_PRIOR_SCALE
    design: str = "srs"
    allocations: dict | None = None
    prediction_target: str = "observed"
    det_exponent: float = GAUSSIAN_DET_EXPONENT
    init: dict | None = None
    targets: str | list = "missing"
    alpha: float = DEFAULT_ALPHA
    n_list: tuple = tuple(range(20, 241, 20))
    designs: tuple = ("srs", "stratified")
    k_list: tuple = (1, 5)
    replicates: int = 1
    theta_beta: tuple = (2.0,)
    theta_tau2: float = 1.0
    theta_sigma2: float = 1.0
    theta_phi: float = 3.0
    true_mean: float = 1.0
    true_sill: float = 1.0
    true_nugget: float = 0.2
    true_phi: float = 2.0
    population: int = 10
    strata_sizes: tuple | None = None
    lag_max: float = 2.0
    lag_points: int = 101
    drop_fraction: float = 0.05
    source: str = field(default="<dict>", compare=False, repr=False)

    def sim_config(self) -> SimConfig:
        return SimConfig(
            rows=self.rows, cols=self.cols, extent=tuple(self.extent), phi_true=self.phi_true,
            sigma2_true=self.sigma2_true, beta_true=tuple(self.beta_true), covariates=self.covariates,
            covariate_file=self.covariate_file, snr=self.snr, M=self.M,
            missing_fraction=self.missing_fraction, block=None if self.block is None else tuple(self.block),
            strata=self.strata, covariogram=self.covariogram, seed=self.seed,
        )

    def model_config(self, **overrides) -> ModelConfig:
        init = None
        if self.init is not None:
            init = Theta(**self.init)
        kw = dict(
            n=self.n, G=self.G, K=self.K, burn_in=self.burn_in, covariogram=self.covariogram,
            phi_support=tuple(self.phi_support), prior_shape=self.prior_shape,
            prior_scale=self.prior_scale, design=self.design, allocations=self._allocations(),
            seed=self.seed, prediction_target=self.prediction_target,
            det_exponent=self.det_exponent, init=init,
        )
        kw.update(overrides)
        return ModelConfig(**kw)

    def _allocations(self):
        if self.allocations is None:
            return None
        return {_label(k): v for k, v in self.allocations.items()}


def _label(key: str):
    try:
        return int(key)
    except ValueError:
        return key


def _line_of(text: str, key) -> int | None:
    if not isinstance(key, str):
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_config(doc: dict, text: str = "", source: str = "<dict>") -> RunConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        msgs = []
        for e in errors:
            if e.validator == "additionalProperties" and not e.path:
                extra = sorted(set(doc) - set(SCHEMA["properties"]))
                for key in extra:
                    line = _line_of(text, key)
                    where = f"{source}:{line}" if line else source
                    msgs.append(f"{where}: unknown field {key!r}")
                continue
            key = e.path[0] if e.path else None
            line = _line_of(text, key)
            where = f"{source}:{line}" if line else source
            name = ".".join(str(p) for p in e.path) or "<root>"
            msgs.append(f"{where}: field {name!r}: {e.message}")
        raise ConfigError("\n".join(msgs))
    kw = {}
    for f in fields(RunConfig):
        if f.name in doc:
            v = doc[f.name]
            kw[f.name] = tuple(v) if isinstance(v, list) and f.name != "targets" else v
    try:
        cfg = RunConfig(**kw, source=source)
        if cfg.burn_in >= cfg.G:
            raise ConfigError(f"{source}: burn_in ({cfg.burn_in}) must be smaller than G ({cfg.G})")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: the config must be a JSON object")
    return parse_config(doc, text, str(path))
