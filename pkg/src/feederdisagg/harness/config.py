"""Scenario configuration and its ``key = value`` file format."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .._base import ConfigError
from ..dfs import ETA_S_TABLE, DfsConfig, ModelSet, UpdateMethod
from ..plant import PopulationSpec

CONFIG_KEYS = (
    "eta_s", "eta_r", "lambda", "update_method", "model_set", "seed", "days",
    "n_houses", "n_ac", "res_mean_kw", "com_mean_kw", "tow_bin_minutes", "ridge",
    "clamp_nonneg", "project_simplex", "sweep_eta_s", "sweep_eta_r", "sweep_lambda",
)

DEFAULT_SWEEP_ETA_S = tuple(round(0.1 * i, 1) for i in range(10))
DEFAULT_SWEEP_ETA_R = (1e-7, 1e-6, 1e-5, 1e-4, 1e-3)
DEFAULT_SWEEP_LAMBDA = tuple(10.0 ** k for k in range(-7, 1))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one harness run needs.

    ``eta_s=None`` takes the tabulated default for the (model set, update
    method) combination. Training-window lengths and ``n_jobs`` are not
    part of the file format.
    """

    eta_s: float | None = None
    eta_r: float = 1e-5
    lam: float = 1e-5
    update_method: UpdateMethod = UpdateMethod.M1
    model_set: ModelSet = ModelSet.RED
    seed: int = 0
    days: tuple = (90, 91, 92, 93, 94)
    n_houses: int = 2499
    n_ac: int = 2269
    res_mean_kw: float = 5800.0
    com_mean_kw: float = 2100.0
    tow_bin_minutes: int = 15
    ridge: float = 1e-6
    clamp_nonneg: bool = False
    project_simplex: bool | None = None
    sweep_eta_s: tuple = DEFAULT_SWEEP_ETA_S
    sweep_eta_r: tuple = DEFAULT_SWEEP_ETA_R
    sweep_lambda: tuple = DEFAULT_SWEEP_LAMBDA
    bundle_path: Path | None = None
    out_dir: Path | None = None
    mlr_days: int = 40
    lti_days: int = 90
    noise_days: int = 7
    n_jobs: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "update_method", UpdateMethod(int(self.update_method)))
        object.__setattr__(self, "model_set",
                           ModelSet(str(getattr(self.model_set, "value", self.model_set)).lower()))
        days = tuple(sorted(set(int(d) for d in self.days)))
        if not days:
            raise ConfigError("days must be nonempty")
        if days[0] < 1:
            raise ConfigError("test days need at least one preceding day")
        object.__setattr__(self, "days", days)
        for name in ("sweep_eta_s", "sweep_eta_r", "sweep_lambda"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise ConfigError(f"{name} must be nonempty")
            object.__setattr__(self, name, grid)
        if self.n_ac > self.n_houses:
            raise ConfigError("n_ac cannot exceed n_houses")
        for name in ("mlr_days", "lti_days", "noise_days"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        # validates rates
        self.dfs_config()

    @property
    def resolved_eta_s(self) -> float:
        if self.eta_s is not None:
            return float(self.eta_s)
        return ETA_S_TABLE[(self.model_set, self.update_method)]

    def dfs_config(self, **overrides) -> DfsConfig:
        kw = dict(eta_s=self.resolved_eta_s, eta_r=self.eta_r, lam=self.lam,
                  update_method=self.update_method, model_set=self.model_set,
                  clamp_nonneg=self.clamp_nonneg, project_simplex=self.project_simplex)
        kw.update(overrides)
        return DfsConfig(**kw)

    def population_spec(self) -> PopulationSpec:
        return PopulationSpec(n_houses=self.n_houses, n_ac=self.n_ac,
                              target_res_mean_kw=self.res_mean_kw,
                              target_com_mean_kw=self.com_mean_kw, seed=self.seed)

    @property
    def test_start(self) -> int:
        return self.days[0]

    @property
    def scenario_label(self) -> str:
        return f"{self.model_set.value}_m{int(self.update_method)}"

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


# ------------------------------------------------------------------ parsing

def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_optional_bool(raw: str):
    return None if raw.lower() in ("auto", "none") else _parse_bool(raw)


def _parse_int(raw: str) -> int:
    return int(raw, 10)


def parse_days(raw: str) -> tuple:
    """``"90-94"``, ``"90,92,95"`` or a mix of both."""
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            raise ValueError("empty day entry")
        if "-" in item:
            lo, hi = (int(p) for p in item.split("-", 1))
            if hi < lo:
                raise ValueError(f"descending day range {item!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(item))
    return tuple(out)


def _float_list(raw: str) -> tuple:
    items = [p.strip() for p in raw.split(",")]
    if any(not p for p in items):
        raise ValueError("empty list entry")
    return tuple(float(p) for p in items)


def _parse_eta_s(raw: str):
    return None if raw.lower() in ("auto", "table", "none") else float(raw)


# config key -> (ScenarioConfig field, parser)
_PARSERS = {
    "eta_s": ("eta_s", _parse_eta_s),
    "eta_r": ("eta_r", float),
    "lambda": ("lam", float),
    "update_method": ("update_method", lambda s: UpdateMethod(_parse_int(s))),
    "model_set": ("model_set", lambda s: ModelSet(s.lower())),
    "seed": ("seed", _parse_int),
    "days": ("days", parse_days),
    "n_houses": ("n_houses", _parse_int),
    "n_ac": ("n_ac", _parse_int),
    "res_mean_kw": ("res_mean_kw", float),
    "com_mean_kw": ("com_mean_kw", float),
    "tow_bin_minutes": ("tow_bin_minutes", _parse_int),
    "ridge": ("ridge", float),
    "clamp_nonneg": ("clamp_nonneg", _parse_bool),
    "project_simplex": ("project_simplex", _parse_optional_bool),
    "sweep_eta_s": ("sweep_eta_s", _float_list),
    "sweep_eta_r": ("sweep_eta_r", _float_list),
    "sweep_lambda": ("sweep_lambda", _float_list),
}
assert tuple(_PARSERS) == CONFIG_KEYS


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    values = {}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {seen[key]}")
        if not raw:
            raise ConfigError(f"{source}:{lineno}: key {key!r} has no value")
        attr, parser = _PARSERS[key]
        try:
            values[attr] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        seen[key] = lineno
    try:
        return ScenarioConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def format_config(config: ScenarioConfig) -> str:
    """Render ``config`` in the file format (round-trips through :func:`parse_config_text`)."""
    def render(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if v is None:
            return "auto"
        if isinstance(v, tuple):
            return ", ".join(render(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, int):
            return str(int(v))
        return str(getattr(v, "value", v))

    lines = []
    for key, (attr, _) in _PARSERS.items():
        lines.append(f"{key} = {render(getattr(config, attr))}")
    return "\n".join(lines) + "\n"


__all__ = ["CONFIG_KEYS", "ScenarioConfig", "format_config", "parse_config",
           "parse_config_text", "parse_days"]
