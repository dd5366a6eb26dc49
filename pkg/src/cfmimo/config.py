"""Experiment configuration: dataclass, flat key=value files, scheme labels.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Keys match the field names below. A scheme label bundles the association
and power policies as ``assoc/pilot/data``, e.g. ``dappa/wsrm/maxmin`` or
``top5/full/equal``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .propagation import noise_power_w

ASSOCIATIONS = ("dappa", "all")  # plus "top<n>"
PILOT_SCHEMES = ("full", "equal", "wsrm")
DATA_SCHEMES = ("equal", "maxmin")
SWEEP_AXES = {"U": "n_ues", "L": "n_aps", "tau": "tau", "kappa": "kappa",
              "M": "n_antennas"}


@dataclass
class ExperimentConfig:
    """Everything one experiment run depends on.

    Power values are in watts, distances in metres. ``kappa = None`` asks
    the harness to calibrate the clustering threshold by a coarse sweep and
    freeze the winner (recorded in the run metadata).
    """

    n_aps: int = 100
    n_ues: int = 40
    n_antennas: int = 1
    side_m: float = 1000.0
    ap_height_m: float = 10.0
    model: str = "umi"             # "umi" | "three_slope"
    tau: int = 20                  # pilot length / count
    tau_c: int = 200               # coherence block in symbols
    noise_dbm: float = -92.0
    p_max_w: float = 0.1
    kappa: float | None = None     # clustering stop threshold; None = calibrate
    corr_mode: str = "abs"         # "abs" | "signed" AP similarity
    pilot_policy: str = "round_robin"
    association: str = "dappa"     # "dappa" | "all" | "top<n>"
    pilot_scheme: str = "equal"    # "full" | "equal" | "wsrm"
    data_scheme: str = "equal"     # "equal" | "maxmin"
    batches: int = 1000            # large-scale realisations
    seed: int = 1
    workers: int = 1
    wsrm_eps_w: float = 1e-6
    wsrm_delta: float = 1e-4
    wsrm_max_iter: int = 100
    maxmin_tol: float = 1e-6
    traces_kept: int = 5           # solver traces written per run point

    @property
    def sigma2_w(self) -> float:
        return noise_power_w(self.noise_dbm)

    @property
    def scheme(self) -> str:
        return f"{self.association}/{self.pilot_scheme}/{self.data_scheme}"

    @property
    def topn(self) -> int | None:
        if self.association.startswith("top"):
            return int(self.association[3:])
        return None

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def validate(self):
        if self.n_aps < 1 or self.n_ues < 1 or self.n_antennas < 1:
            raise ConfigError("n_aps, n_ues and n_antennas must be positive")
        if not 0 < self.tau < self.tau_c:
            raise ConfigError(f"need 0 < tau < tau_c, got {self.tau}, {self.tau_c}")
        if self.side_m <= 0 or self.p_max_w <= 0:
            raise ConfigError("side_m and p_max_w must be positive")
        if self.model not in ("umi", "three_slope"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.pilot_scheme not in PILOT_SCHEMES:
            raise ConfigError(f"unknown pilot scheme {self.pilot_scheme!r}")
        if self.data_scheme not in DATA_SCHEMES:
            raise ConfigError(f"unknown data scheme {self.data_scheme!r}")
        if self.corr_mode not in ("signed", "abs"):
            raise ConfigError(f"unknown corr_mode {self.corr_mode!r}")
        if self.pilot_policy not in ("round_robin", "random"):
            raise ConfigError(f"unknown pilot policy {self.pilot_policy!r}")
        if self.association.startswith("top"):
            tail = self.association[3:]
            if not tail.isdigit() or not 1 <= int(tail) <= self.n_aps:
                raise ConfigError(f"bad top-n association {self.association!r}")
        elif self.association not in ASSOCIATIONS:
            raise ConfigError(f"unknown association {self.association!r}")
        if self.kappa is not None and self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if self.batches < 1 or self.workers < 1:
            raise ConfigError("batches and workers must be positive")
        return self


def apply_scheme(config: ExperimentConfig, scheme: str) -> ExperimentConfig:
    """Override the association and power policies from an a/p/d label."""
    parts = scheme.split("/")
    if len(parts) != 3:
        raise ConfigError(f"scheme must look like assoc/pilot/data, got {scheme!r}")
    assoc, pilot, data = parts
    return config.replace(association=assoc, pilot_scheme=pilot,
                          data_scheme=data).validate()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key, raw):
    raw = raw.strip()
    ftype = _FIELD_TYPES[key]
    if key == "kappa":
        return None if raw.lower() in ("none", "auto", "") else float(raw)
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def parse_config_text(text) -> dict:
    """Parse flat key = value lines into a field dict."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config(path, overrides=None) -> ExperimentConfig:
    """Build a config from a file plus override key/value pairs."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, str(raw)) if isinstance(raw, str) else raw
    return ExperimentConfig(**values).validate()


def format_config(config: ExperimentConfig, extra=None) -> str:
    """Serialise a config (plus resolved extras) back to the flat format."""
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
