"""Run configuration: a YAML document mirrored by the command-line flags."""

from __future__ import annotations

import dataclasses
import glob
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .models import PENALTY_SCHEMES, ModelConfig, ModelKind, NowcastError, _eval_indices, check_history
from .panel import MonthlyPanel, to_month
from .solver import PenaltySpec

ALL_MODELS = ("ARGO", "GT", "SAR", "SAR+GDT", "GDT", "naive")
_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)} - {"kind"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs.

    ``penalty`` is the default scheme for models that take one (ARGO);
    a per-model ``penalty`` entry wins over it. ``snapshots`` is a glob of
    query CSVs used by the robustness verb; cases and gdt stay fixed.
    """

    cases: str | None = None
    queries: str | None = None
    gdt: str | None = None
    output: str = "out"
    region: str | None = None
    eval_window: tuple[str, str] | None = None
    models: tuple[ModelConfig, ...] = field(default_factory=lambda: tuple(ModelConfig(m) for m in ALL_MODELS))
    penalty: str | None = None
    snapshots: str | None = None
    seed: int = 0
    dump_coefficients: bool = True
    keep_incomplete: bool = False

    def __post_init__(self):
        if self.penalty is not None and self.penalty not in PENALTY_SCHEMES:
            raise ConfigError(f"unknown penalty scheme {self.penalty!r}; choose from {PENALTY_SCHEMES}")
        if self.eval_window is not None:
            if len(self.eval_window) != 2:
                raise ConfigError("eval_window needs exactly two months: [start, end]")
            try:
                start, end = (to_month(v) for v in self.eval_window)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad eval_window {self.eval_window!r}: {exc}") from exc
            if end < start:
                raise ConfigError(f"eval_window ends ({end}) before it starts ({start})")
            object.__setattr__(self, "eval_window", (str(start), str(end)))
        labels = [m.kind.label for m in self.models]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate models: {labels}")
        if not labels:
            raise ConfigError("no models selected")

    def resolved_models(self) -> tuple[ModelConfig, ...]:
        """Model configs with the run-level penalty scheme filled in for ARGO."""
        out = []
        for m in self.models:
            if m.kind is ModelKind.ARGO and m.penalty is None and self.penalty is not None:
                m = m.replace(penalty=self.penalty)
            out.append(m)
        return tuple(out)

    def window_for(self, panel: MonthlyPanel) -> tuple[str, str]:
        """The configured window, or the longest one every model can serve."""
        if self.eval_window is not None:
            return self.eval_window
        need = max(m.history_months for m in self.resolved_models())
        if need >= len(panel.months):
            raise ConfigError(f"panel has {len(panel.months)} months; the models need {need} "
                              "months of history before the first prediction")
        return (str(panel.months[need]), str(panel.months[-1]))

    def validate_against(self, panel: MonthlyPanel) -> tuple[str, str]:
        """Check history, gdt and query requirements for every model before any fit."""
        window = self.window_for(panel)
        try:
            first, _ = _eval_indices(panel, window)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if first < 0:
            raise ConfigError(f"evaluation window starts {window[0]}, before the panel ({panel.start})")
        for m in self.resolved_models():
            try:
                check_history(panel, m, window)
            except (ValueError, NowcastError) as exc:
                raise ConfigError(str(exc)) from exc
        return window

    def snapshot_paths(self) -> list[str]:
        if not self.snapshots:
            raise ConfigError("no snapshot glob configured")
        paths = sorted(glob.glob(self.snapshots))
        if len(paths) < 2:
            raise ConfigError(f"snapshot glob {self.snapshots!r} matched {len(paths)} file(s); need at least 2")
        return paths

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _explicit_penalty(kind, entry) -> PenaltySpec:
    unknown = set(entry) - {"lags", "queries"}
    if unknown:
        raise ConfigError(f"model {kind}: penalty mapping takes 'lags' and 'queries', got {sorted(unknown)}")
    try:
        return PenaltySpec(tuple(entry.get("lags", ())), tuple(entry.get("queries", ())))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model {kind}: {exc}") from exc


def parse_model(entry) -> ModelConfig:
    """A model entry is a bare name (``ARGO``) or a mapping with ``kind`` plus ModelConfig fields.

    ``penalty`` may be a scheme name or explicit multipliers,
    ``{lags: [...], queries: [...]}``.
    """
    if isinstance(entry, ModelConfig):
        return entry
    if isinstance(entry, str):
        try:
            return ModelConfig(entry)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not isinstance(entry, Mapping) or "kind" not in entry:
        raise ConfigError(f"model entry must be a name or a mapping with 'kind': {entry!r}")
    opts = dict(entry)
    kind = opts.pop("kind")
    unknown = set(opts) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown option(s) for {kind}: {sorted(unknown)}")
    for key in ("lags", "lambda_grid"):
        if opts.get(key) is not None:
            opts[key] = tuple(opts[key])
    if isinstance(opts.get("penalty"), Mapping):
        opts["penalty"] = _explicit_penalty(kind, opts["penalty"])
    try:
        return ModelConfig(kind, **opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model {kind}: {exc}") from exc


def _resolve(path, base):
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base, path))


def config_from_mapping(data: Mapping[str, Any], base_dir: str = ".") -> RunConfig:
    """Build a RunConfig; relative paths are taken relative to ``base_dir``."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    kw = dict(data)
    for key in ("cases", "queries", "gdt", "output", "snapshots"):
        if key in kw:
            kw[key] = _resolve(kw[key], base_dir)
    if "models" in kw:
        kw["models"] = tuple(parse_model(m) for m in kw["models"])
    if kw.get("eval_window") is not None:
        kw["eval_window"] = tuple(str(to_month(v)) for v in kw["eval_window"])
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, base_dir=os.path.dirname(os.path.abspath(path)))


def merge(flags: Mapping[str, Any], file_config: Mapping[str, Any] | None, base_dir: str = ".") -> RunConfig:
    """Combine command-line values with a config document; document keys take precedence."""
    data = {k: v for k, v in flags.items() if v is not None}
    cfg_data = dict(file_config or {})
    # flag paths are relative to the working directory, document paths to the document
    for key in ("cases", "queries", "gdt", "output", "snapshots"):
        if key in data:
            data[key] = os.path.abspath(data[key])
    out = config_from_mapping(data, ".")
    if not cfg_data:
        return out
    from_file = config_from_mapping(cfg_data, base_dir)
    return out.replace(**{k: getattr(from_file, k) for k in cfg_data})
