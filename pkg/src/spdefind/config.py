"""Experiment configuration: a flat ``key = value`` text format with dotted sections.

Example::

    # heat equation at reduced scale
    model.preset = heat
    sim.ensembles = 500
    hyper.refine = false

A preset fills in the benchmark model, grid, time step and dictionary size;
any key given explicitly overrides the preset value.  :func:`serialize_config`
writes every resolved key, so its output parses back to an equal config.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .exceptions import ConfigError, MissingTruth
from .library import generate_terms
from .simulate import Boundary, Grid1d, SpdeModel, TimeSpec, allen_cahn_model, heat_model, nagumo_model
from .ssvb import SsHyperparams
from .stlsq import StlsqConfig

PRESETS = ("heat", "allen-cahn", "nagumo")
CUSTOM = "custom"
DEFAULT_SEED = 42


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = CUSTOM
    diffusivity: float = 1.0
    noise: float = 1.0
    drift_poly: tuple = ()
    length: float = 20.0
    nx: int = 64
    boundary: str = "periodic"
    horizon: float = 1.0
    dt: float = 0.0025
    ensembles: int = 2000
    seed: int = DEFAULT_SEED
    scale_noise_by_sqrt_dx: bool = False
    blowup_bound: float = 1e6
    poly_max: int = 6
    deriv_max: int = 5
    products: bool = True
    standardize: bool = False
    slab_variance: float = 10.0
    inclusion_prior: float = 0.1
    noise_shape: float = 1e-4
    noise_rate: float = 1e-4
    tau_init: float = 1000.0
    elbo_tol: float = 1e-6
    pip_threshold: float = 0.5
    max_iters: int = 500
    init_on: float = 0.99
    init_off: float = 0.01
    refine: bool = True
    stlsq_threshold: float = 0.3
    stlsq_max_iters: int = 20
    stlsq_ridge: float = 0.0
    eval_ensembles: int = 200
    eval_seed: int = DEFAULT_SEED + 1
    output_field: str = "field.fld"
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            ("model.preset", self.preset in PRESETS + (CUSTOM,),
             f"unknown preset {self.preset!r}; expected one of {', '.join(PRESETS)}"),
            ("model.diffusivity", self.diffusivity >= 0, "must be non-negative"),
            ("model.noise", self.noise >= 0, "must be non-negative"),
            ("grid.length", self.length > 0, "must be positive"),
            ("grid.nx", self.nx >= 3, "must be >= 3"),
            ("grid.boundary", self.boundary in [b.value for b in Boundary],
             "must be periodic or dirichlet"),
            ("time.dt", self.dt > 0, "must be positive"),
            ("time.horizon", self.dt > 0 and round(self.horizon / self.dt) >= 1,
             "must cover at least one time step"),
            ("sim.ensembles", self.ensembles >= 1, "must be >= 1"),
            ("sim.seed", self.seed >= 0, "must be non-negative"),
            ("sim.blowup_bound", self.blowup_bound > 0, "must be positive"),
            ("dictionary.poly_max", self.poly_max >= 0, "must be non-negative"),
            ("dictionary.deriv_max", 0 <= self.deriv_max <= 5, "must lie in 0..5"),
            ("hyper.init_on", 0 < self.init_off < self.init_on < 1,
             "need 0 < hyper.init_off < hyper.init_on < 1"),
            ("eval.ensembles", self.eval_ensembles >= 1, "must be >= 1"),
            ("eval.seed", self.eval_seed >= 0, "must be non-negative"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigError(message, key=key)
        for section, build in (("model", self.model), ("hyper", self.hyper),
                               ("stlsq", self.stlsq_config)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(str(exc), key=_blame(section, str(exc))) from exc

    def model(self) -> SpdeModel:
        return SpdeModel(self.diffusivity, self.noise, self.drift_poly, self.preset)

    def grid(self) -> Grid1d:
        return Grid1d(self.length, self.nx, Boundary(self.boundary))

    def time(self) -> TimeSpec:
        return TimeSpec(self.horizon, self.dt)

    def hyper(self) -> SsHyperparams:
        return SsHyperparams(self.slab_variance, self.inclusion_prior, self.noise_shape,
                             self.noise_rate, self.tau_init, self.elbo_tol, self.pip_threshold,
                             self.max_iters)

    def stlsq_config(self) -> StlsqConfig:
        return StlsqConfig(self.stlsq_threshold, self.stlsq_max_iters, self.stlsq_ridge)

    def terms(self):
        return generate_terms(self.poly_max, self.deriv_max, self.products)

    def truth_model(self) -> SpdeModel:
        """Generating model for metrics; only preset runs carry a ground truth."""
        if self.preset == CUSTOM:
            raise MissingTruth("config has no preset, so there is no ground truth to compare to")
        return self.model()


# dotted key -> field name
_KEYS = {
    "model.preset": "preset",
    "model.diffusivity": "diffusivity",
    "model.noise": "noise",
    "model.drift_poly": "drift_poly",
    "grid.length": "length",
    "grid.nx": "nx",
    "grid.boundary": "boundary",
    "time.horizon": "horizon",
    "time.dt": "dt",
    "sim.ensembles": "ensembles",
    "sim.seed": "seed",
    "sim.scale_noise_by_sqrt_dx": "scale_noise_by_sqrt_dx",
    "sim.blowup_bound": "blowup_bound",
    "dictionary.poly_max": "poly_max",
    "dictionary.deriv_max": "deriv_max",
    "dictionary.products": "products",
    "dictionary.standardize": "standardize",
    "hyper.slab_variance": "slab_variance",
    "hyper.inclusion_prior": "inclusion_prior",
    "hyper.noise_shape": "noise_shape",
    "hyper.noise_rate": "noise_rate",
    "hyper.tau_init": "tau_init",
    "hyper.elbo_tol": "elbo_tol",
    "hyper.pip_threshold": "pip_threshold",
    "hyper.max_iters": "max_iters",
    "hyper.init_on": "init_on",
    "hyper.init_off": "init_off",
    "hyper.refine": "refine",
    "stlsq.threshold": "stlsq_threshold",
    "stlsq.max_iters": "stlsq_max_iters",
    "stlsq.ridge": "stlsq_ridge",
    "eval.ensembles": "eval_ensembles",
    "eval.seed": "eval_seed",
    "output.field": "output_field",
    "output.dir": "output_dir",
}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _blame(section, message):
    """Best guess at the dotted key behind a sub-object's validation message."""
    if section == "model":
        return "model.drift_poly"
    word = message.split(" ", 1)[0]
    for key in _KEYS:
        if key.startswith(section + ".") and key.split(".", 1)[1] == word:
            return key
    return section


def _preset_values(name: str) -> dict:
    if name == "heat":
        m, dt, dm = heat_model(), 0.0025, 5
    elif name == "allen-cahn":
        m, dt, dm = allen_cahn_model(), 0.0025, 5
    elif name == "nagumo":
        m, dt, dm = nagumo_model(), 0.001, 4
    else:
        return {}
    return dict(preset=name, diffusivity=m.diffusivity, noise=m.noise_amplitude,
                drift_poly=m.drift_poly, length=20.0, nx=64, boundary="periodic", horizon=1.0,
                dt=dt, poly_max=6, deriv_max=dm, products=True)


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}",
                          key="model.preset")
    values = _preset_values(name)
    values.update(overrides)
    if "seed" in overrides and "eval_seed" not in overrides:
        values["eval_seed"] = overrides["seed"] + 1
    return ExperimentConfig(**values)


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_poly(text):
    # "1:1.0, 3:-1.0"; empty means no source term
    out = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        power, sep, coef = item.partition(":")
        if not sep:
            raise ValueError(f"drift_poly entries look like power:coefficient, got {item!r}")
        out.append((int(power), float(coef)))
    return tuple(out)


def _convert(name, text):
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        return _parse_bool(text)
    if kind == "int":
        value = float(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind == "float":
        return float(text)
    if kind == "tuple":
        return _parse_poly(text)
    return text


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(f"{p}:{c!r}" for p, c in value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; errors carry the offending line number and key."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=lineno)
        if key not in _KEYS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in raw:
            raise ConfigError(f"duplicate key (first set on line {raw[key][1]})", line=lineno, key=key)
        raw[key] = (value, lineno)

    values = {}
    if "model.preset" in raw:
        preset, lineno = raw["model.preset"]
        if preset not in PRESETS + (CUSTOM,):
            raise ConfigError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}",
                              line=lineno, key="model.preset")
        values.update(_preset_values(preset))
    for key, (text_value, lineno) in raw.items():
        name = _KEYS[key]
        try:
            values[name] = _convert(name, text_value)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, key=key) from exc
    if "sim.seed" in raw and "eval.seed" not in raw:
        values["eval_seed"] = values["seed"] + 1
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        if exc.key in raw:
            raise ConfigError(exc.message, line=raw[exc.key][1], key=exc.key) from exc
        raise


def serialize_config(config: ExperimentConfig) -> str:
    by_field = asdict(config)
    lines = [f"{key} = {_format(by_field[name])}" for key, name in _KEYS.items()]
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    """Read and parse a config file.  I/O problems surface as ``OSError``."""
    return parse_config(Path(path).read_text())


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
