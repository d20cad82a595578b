"""Flat ``key = value`` experiment configuration with symbolic batch/iteration rules."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

PROBLEMS = ("example1", "example2", "hjb", "custom")
METHODS = ("batch_sgd", "contraction", "param_sgd", "adagrad", "adam")


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


_RULE = re.compile(r"^\s*(?:(?P<c>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\*\s*)?N(?:\s*\^\s*(?P<p>2))?\s*$")


def expand_rule(rule, N: int) -> int:
    """Resolve ``M``/``K`` rules: an integer literal, ``N``, ``N^2``, ``c*N`` or ``c*N^2``."""
    if isinstance(rule, int):
        value = rule
    else:
        text = str(rule).strip()
        if re.fullmatch(r"[0-9]+", text):
            value = int(text)
        else:
            m = _RULE.match(text)
            if m is None:
                raise ConfigError(f"cannot parse rule {rule!r}; use an integer, N, N^2, c*N or c*N^2")
            c = float(m.group("c")) if m.group("c") else 1.0
            value = int(round(c * N ** (2 if m.group("p") else 1)))
    if value < 0:
        raise ConfigError(f"rule {rule!r} gives a negative count")
    return value


def _parse_int_list(text: str) -> List[int]:
    out: List[int] = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if re.fullmatch(r"[0-9]+-[0-9]+", part):
            lo, hi = (int(v) for v in part.split("-"))
            out.extend(range(lo, hi + 1))
        else:
            try:
                out.append(int(part))
            except ValueError:
                raise ConfigError(f"bad integer list entry {part!r}") from None
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "example2"
    method: str = "batch_sgd"
    N: int = 40
    N_list: List[int] = field(default_factory=list)
    M: str = "N"
    K: str = "N^2"
    scheme: str = "euler"
    lr: str = "robbins_monro"
    eta: Optional[float] = None
    theta: Optional[float] = None
    offset: Optional[float] = None
    rho: float = 0.995
    seeds: List[int] = field(default_factory=lambda: [0])
    output: str = "runs"
    record_every: int = 1
    reference: str = "data"
    lanes: int = 0  # seeds advanced together; 0 picks by memory budget
    # randomized-network problem
    d: int = 10
    lam: float = 1.0
    width: int = 128
    batch: int = 1024
    epochs: int = 380
    hjb_lr: float = 2e-3
    hjb_n: int = 20
    eval_samples: int = 65536
    ref_samples: int = 10_000_000

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.problem == "custom":
            raise ConfigError("problem 'custom' has no built-in spec; use the Python API")
        if self.N < 1:
            raise ConfigError("N must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.scheme not in ("euler", "order2"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.lr not in ("constant", "robbins_monro"):
            raise ConfigError(f"lr must be 'constant' or 'robbins_monro', got {self.lr!r}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if self.reference not in ("data", "exact"):
            raise ConfigError("reference must be 'data' or 'exact'")
        for n in [self.N, *self.N_list]:
            if expand_rule(self.M, n) < 1:
                raise ConfigError(f"M rule {self.M!r} gives no paths at N={n}")
            expand_rule(self.K, n)

    def resolved(self, N: Optional[int] = None):
        N = self.N if N is None else N
        return N, expand_rule(self.M, N), expand_rule(self.K, N)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "Optional[float]":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "List[int]":
            return _parse_int_list(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, keys are the field names."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
