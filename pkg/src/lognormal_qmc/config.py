"""Plain ``key = value`` configuration files.

Lines starting with ``#`` and blank lines are ignored.  Lists are comma
separated.  Model keys and experiment keys may share one file.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ._validation import check_positive_int, check_scalar_in
from .exceptions import ParameterError
from .wavelet import WaveletModel

MODEL_KEYS = {
    "d": int, "beta0": float, "beta1": float, "theta": float, "c_rho": float,
    "ell0": int, "L": int, "basis": str, "amplitude": float,
}


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


EXPERIMENT_KEYS = {
    "seed": int, "n_elements": int, "n_list": _int_list, "R": int, "n_ref": int,
    "R_ref": int, "q": float, "delta": float, "output": str,
}


def parse_text(text):
    """Key-value pairs of a config text, values still as strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(raw, table, allow_unknown):
    out = {}
    for key, value in raw.items():
        if key not in table:
            if allow_unknown:
                continue
            raise ParameterError(f"unknown config key {key!r}")
        if value.lower() == "none":
            out[key] = None
            continue
        try:
            out[key] = table[key](value)
        except ValueError as exc:
            raise ParameterError(f"bad value for {key!r}: {value!r}") from exc
    return out


# Haar field of the convergence experiments: levels 1..6, s = 126
DEFAULT_MODEL = {"d": 1, "beta0": 1.0, "beta1": 6.0, "theta": 2.25, "ell0": 1, "L": 6, "basis": "haar"}


def default_model():
    return WaveletModel(**DEFAULT_MODEL)


# every model the package ships defaults for, by purpose
SHIPPED_MODELS = {
    "convergence": default_model(),
    "derivative_beta4": WaveletModel(beta1=4.0, theta=1.2, ell0=0, L=5),
    "derivative_beta6": WaveletModel(beta1=6.0, theta=2.25, ell0=0, L=5),
    "truncation": WaveletModel(beta1=4.0, theta=1.2, ell0=0, L=8),
    "besov_hat": WaveletModel(beta1=3.0, theta=0.5, ell0=0, L=10, basis="hat"),
}


def model_from_mapping(raw):
    """Model from string-valued keys; missing keys fall back to the experiment default."""
    return WaveletModel(**{**DEFAULT_MODEL, **_convert(raw, MODEL_KEYS, allow_unknown=True)})


def model_to_text(model, seed=None):
    lines = [f"{k} = {getattr(model, k)!r}".replace("'", "") for k in MODEL_KEYS]
    if seed is not None:
        lines.append(f"seed = {int(seed)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    """Convergence-experiment settings; hashable so derived objects can be cached."""

    model: WaveletModel = field(default_factory=default_model)
    n_elements: int = 256
    n_list: tuple = (31, 61, 127, 251, 509, 1021)
    R: int = 16
    seed: int = 0
    n_ref: int = 8191
    R_ref: int = 32
    q: float = 0.45
    delta: float = 0.1
    output: str = None

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        check_positive_int(self.n_elements, "n_elements", minimum=2)
        check_positive_int(self.R, "R", minimum=8)
        check_positive_int(self.R_ref, "R_ref", minimum=1)
        check_positive_int(self.seed, "seed", minimum=0)
        if len(self.n_list) == 0 or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ParameterError("n_list must be non-empty and strictly increasing")
        if self.n_list[0] < 2:
            raise ParameterError("point counts must be at least 2")
        if self.n_ref < 8 * self.n_list[-1]:
            raise ParameterError("n_ref must be at least 8 * max(n_list)")
        check_scalar_in(self.q, "q", 0.0, 1.0)
        check_scalar_in(self.delta, "delta", 0.0, 1.0, high_open=True)

    @property
    def mesh_h(self):
        return 1.0 / self.n_elements

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        out["n_list"] = list(self.n_list)
        out["model"] = asdict(self.model)
        return out

    def config_hash(self):
        """sha256 of the canonical JSON form (output path excluded)."""
        data = self.to_dict()
        data.pop("output")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_text(self):
        lines = [model_to_text(self.model).rstrip("\n")]
        for key in EXPERIMENT_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            if key == "n_list":
                value = ", ".join(str(n) for n in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        raw = parse_text(text)
        unknown = set(raw) - set(MODEL_KEYS) - set(EXPERIMENT_KEYS)
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        kwargs = _convert(raw, EXPERIMENT_KEYS, allow_unknown=True)
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if any(k in raw for k in MODEL_KEYS):
            kwargs["model"] = model_from_mapping(raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())
