"""Flat key=value pipeline configuration.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Lists are comma separated; network layouts use dashes and semicolons
(``16-8-4;8-4-2``).  Every key has a default, so an empty file is a valid
config.  See the README for the full key reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .io import ALL_STATES, STATES
from .models.base import GRID_VALUES, table_grid
from .synth import CohortConfig, DeviceErrorModel

# Tractable default grids; any parameter left unset in a config falls back
# to these rather than the full published value lists (which remain encoded
# in models.base.GRID_VALUES and can be requested key by key).
DEFAULT_GRID_OVERRIDES = {
    "svr_rbf": {"c": (10.0,), "epsilon": (0.1,), "gamma": (0.01, 0.1)},
    "svr_poly": {"c": (10.0,), "epsilon": (0.1,), "gamma": (0.01,),
                 "degree": (2, 3)},
    "rf": {"max_features": (2,), "n_estimators": (200,), "max_depth": (10,),
           "min_samples_split": (2,), "min_samples_leaf": (2,)},
    "gp": {"alpha": (1e-3, 1e-1)},
    "mlp": {"hidden_layer_sizes": ((16, 8, 4),), "learning_rate": (0.001,)},
    "sigmoid_lr": {"c": (0.1, 1.0), "penalty": ("l1", "l2")},
    "knn": {"n_neighbors": (10, 30), "power": (1, 2)},
}


def _default_overrides():
    return {family: dict(params) for family, params in
            DEFAULT_GRID_OVERRIDES.items()}


@dataclass
class PipelineConfig:
    # data locations
    data_dir: str = ""
    out_dir: str = "out"

    # synthetic cohort (used when data_dir is empty)
    synth_participants: int = 5
    synth_rs_minutes: float = 10.0
    synth_ls_minutes: tuple = (12.0, 15.0)
    synth_is_minutes: float = 20.0
    synth_fs_ecg: float = 250.0
    synth_fs_acc: float = 32.0
    synth_bias_rs: float = 1.0
    synth_bias_ls: float = 0.5
    synth_bias_is: float = 3.0
    synth_noise_sd: float = 1.5
    synth_ma_gain: float = 2.0
    synth_lag_s: float = 10.0
    synth_device_cadence_s: float = 5.0
    synth_extra_devices: tuple = ()  # "name:noise_sd" entries

    # signal extraction
    ecg_band_low_hz: float = 15.0
    ecg_band_high_hz: float = 20.0
    ecg_filter_order: int = 4
    hr_resample_hz: float = 4.0
    hr_lowpass_cutoff: float = 0.05
    hr_lowpass_order: int = 2
    grid_step_s: float = 15.0
    grid_tolerance_s: float = 7.5
    shift_rs_s: float = 10.0
    shift_ls_s: float = 10.0
    shift_is_s: float = 10.0

    # activity
    pal_scheme: str = "crouter_va"
    fusion_pal_schemes: tuple = ()
    counts_per_g_s: float = 128.0
    count_deadband_g: float = 0.01

    # feature selection
    p_threshold: float = 0.05
    mi_threshold: float = 0.3
    mi_neighbors: int = 3

    # models and evaluation
    states: tuple = (*STATES, ALL_STATES)
    models: tuple = ("svr_rbf",)
    grid_overrides: dict = field(default_factory=_default_overrides)
    rolling_windows: tuple = (5, 10)
    report_method: str = "auto"
    seed: int = 42
    jobs: int = 1

    def validate(self):
        if not self.models:
            raise ConfigError("empty grid: configure at least one model family")
        for m in self.models:
            if m not in GRID_VALUES:
                raise ConfigError(f"unknown model family {m!r}")
        for s in self.states:
            if s not in (*STATES, ALL_STATES):
                raise ConfigError(f"unknown state {s!r}")
        for w in self.rolling_windows:
            if int(w) < 1:
                raise ConfigError("rolling window sizes must be >= 1")
        if self.pal_scheme != "device":
            from .activity import get_scheme
            get_scheme(self.pal_scheme)
        for scheme in self.fusion_pal_schemes:
            from .activity import get_scheme
            get_scheme(scheme)
        return self

    # -- derived views --

    def cohort_config(self) -> CohortConfig:
        devices = [DeviceErrorModel(
            name="wrist",
            bias_bpm=(("RS", self.synth_bias_rs), ("LS", self.synth_bias_ls),
                      ("IS", self.synth_bias_is)),
            noise_sd_bpm=self.synth_noise_sd,
            ma_gain_bpm_per_kcpm=self.synth_ma_gain,
            lag_s=self.synth_lag_s,
            cadence_s=self.synth_device_cadence_s,
        )]
        for entry in self.synth_extra_devices:
            name, _, sd = entry.partition(":")
            devices.append(DeviceErrorModel(
                name=name.strip(), noise_sd_bpm=float(sd or 1.0),
                bias_bpm=(), ma_gain_bpm_per_kcpm=self.synth_ma_gain,
                lag_s=self.synth_lag_s,
                cadence_s=self.synth_device_cadence_s))
        return CohortConfig(
            n_participants=self.synth_participants, seed=self.seed,
            rs_minutes=self.synth_rs_minutes,
            ls_minutes_range=tuple(self.synth_ls_minutes),
            is_minutes=self.synth_is_minutes,
            fs_ecg=self.synth_fs_ecg, fs_acc=self.synth_fs_acc,
            devices=tuple(devices))

    def state_shifts(self) -> dict:
        return {"RS": self.shift_rs_s, "LS": self.shift_ls_s,
                "IS": self.shift_is_s}

    def model_grid(self):
        specs = []
        for family in self.models:
            specs.extend(table_grid(family, self.grid_overrides.get(family)))
        return specs

    def chosen_report_method(self):
        if self.report_method != "auto":
            return self.report_method
        if 10 in tuple(int(w) for w in self.rolling_windows):
            return "rolling_w10"
        if self.rolling_windows:
            return f"rolling_w{int(self.rolling_windows[0])}"
        return "ml"


_LIST_KEYS = {
    "synth_ls_minutes": float,
    "synth_extra_devices": str,
    "fusion_pal_schemes": str,
    "states": str,
    "models": str,
    "rolling_windows": int,
}

_SCALARS = {
    "data_dir": str, "out_dir": str,
    "synth_participants": int, "synth_rs_minutes": float,
    "synth_is_minutes": float, "synth_fs_ecg": float, "synth_fs_acc": float,
    "synth_bias_rs": float, "synth_bias_ls": float, "synth_bias_is": float,
    "synth_noise_sd": float, "synth_ma_gain": float, "synth_lag_s": float,
    "synth_device_cadence_s": float,
    "ecg_band_low_hz": float, "ecg_band_high_hz": float,
    "ecg_filter_order": int, "hr_resample_hz": float,
    "hr_lowpass_cutoff": float, "hr_lowpass_order": int,
    "grid_step_s": float, "grid_tolerance_s": float,
    "shift_rs_s": float, "shift_ls_s": float, "shift_is_s": float,
    "pal_scheme": str, "counts_per_g_s": float, "count_deadband_g": float,
    "p_threshold": float, "mi_threshold": float, "mi_neighbors": int,
    "report_method": str, "seed": int, "jobs": int,
}

_GRID_KEY_TYPES = {
    "c": float, "epsilon": float, "gamma": float, "degree": int,
    "alpha": float, "learning_rate": float,
    "max_features": int, "n_estimators": int, "max_depth": int,
    "min_samples_split": int, "min_samples_leaf": int,
    "n_neighbors": int, "power": int, "penalty": str,
}


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _LIST_KEYS:
        caster = _LIST_KEYS[key]
        if not raw:
            return ()
        return tuple(caster(part.strip()) for part in raw.split(",") if part.strip())
    caster = _SCALARS[key]
    return caster(raw)


def _parse_grid_override(family, param, raw):
    raw = raw.strip()
    if param == "hidden_layer_sizes":
        layouts = []
        for part in raw.split(";"):
            part = part.strip()
            if part:
                layouts.append(tuple(int(x) for x in part.split("-")))
        return tuple(layouts)
    caster = _GRID_KEY_TYPES.get(param)
    if caster is None:
        raise ConfigError(f"unknown grid key {family}_{param}")
    return tuple(caster(p.strip()) for p in raw.split(",") if p.strip())


def parse_config_text(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    overrides: dict = _default_overrides()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in _LIST_KEYS or key in _SCALARS:
            cfg = replace(cfg, **{key: _parse_value(key, raw)})
            continue
        matched = False
        for family in GRID_VALUES:
            prefix = family + "_"
            if key.startswith(prefix):
                param = key[len(prefix):]
                overrides.setdefault(family, {})[param] = _parse_grid_override(
                    family, param, raw)
                matched = True
                break
        if not matched:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    cfg = replace(cfg, grid_overrides=overrides)
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def default_config() -> PipelineConfig:
    return PipelineConfig().validate()
