"""Flat JSON configuration with ``key=value`` overrides."""

from __future__ import annotations

import json
from typing import Any, Callable, Iterable, Mapping, Optional, Union

from .experiments import (
    DEFAULT_M_RATIOS,
    DEFAULT_TRAJECTORY_N_LIST,
    ExperimentConfig,
    U64,
)
from .model import LikelihoodSpec, PriorSpec, ValidationError


class UsageError(ValueError):
    pass


def parse_seed(value: Union[str, int]) -> int:
    """Unsigned 64-bit seed from an int, a decimal string or a ``0x`` hex string."""
    if isinstance(value, bool):
        raise ValidationError("master_seed: must be an integer")
    if isinstance(value, int):
        seed = value
    else:
        text = str(value).strip().lower()
        try:
            seed = int(text[2:], 16) if text.startswith("0x") else int(text, 10)
        except ValueError:
            raise ValidationError(f"master_seed: cannot parse {value!r} as unsigned decimal or 0x-hex") from None
        if text.startswith(("-", "+")):
            raise ValidationError("master_seed: must be unsigned")
    if not 0 <= seed <= U64:
        raise ValidationError("master_seed: must fit in 64 unsigned bits")
    return seed


def _scalar(kind: type) -> Callable[[str, Any], Any]:
    def conv(key, value):
        if isinstance(value, (list, dict)) or isinstance(value, bool):
            raise ValidationError(f"{key}: expected a single {kind.__name__}")
        try:
            out = kind(value) if not isinstance(value, str) else kind(value.strip())
        except (TypeError, ValueError):
            raise ValidationError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None
        if kind is int and isinstance(value, float) and value != out:
            raise ValidationError(f"{key}: expected an integer, got {value!r}")
        return out

    return conv


def _listof(kind: type) -> Callable[[str, Any], tuple]:
    item = _scalar(kind)

    def conv(key, value):
        if isinstance(value, str):
            text = value.strip()
            if text.startswith("["):
                try:
                    value = json.loads(text)
                except json.JSONDecodeError:
                    raise ValidationError(f"{key}: cannot parse {text!r} as a list") from None
            else:
                value = [v for v in text.split(",") if v.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(item(key, v) for v in value)

    return conv


FIELDS: dict[str, Callable[[str, Any], Any]] = {
    "mean_theta": _scalar(float),
    "mean_psi": _scalar(float),
    "var_theta": _scalar(float),
    "var_psi": _scalar(float),
    "var_x": _scalar(float),
    "var_eta": _scalar(float),
    "rho_list": _listof(float),
    "n_list": _listof(int),
    "m_ratio_list": _listof(float),
    "trials": _scalar(int),
    "master_seed": lambda key, v: parse_seed(v),
    "theta_star": _scalar(float),
    "psi_star": _scalar(float),
    "psi_min": _scalar(float),
    "psi_max": _scalar(float),
    "psi_points": _scalar(int),
    "finite_m": _scalar(int),
}

MODE_DEFAULTS: dict[str, dict[str, Any]] = {
    "unsupervised": {"rho_list": (0.75,), "trials": 1},
    "supervised": {"m_ratio_list": (0.0,)},
    "semi_supervised": {"m_ratio_list": DEFAULT_M_RATIOS},
    "trajectory": {"n_list": DEFAULT_TRAJECTORY_N_LIST, "trials": 1000},
    "verify": {"rho_list": (0.0, 0.75), "trials": 1},
}


def split_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise UsageError(f"override {text!r} is not of the form key=value")
    return key.strip(), value


def _check_key(key: str):
    if key not in FIELDS:
        raise UsageError(f"unknown configuration key {key!r}")


def parse_config(
    data: Optional[Union[bytes, str]] = None,
    overrides: Union[Iterable[str], Mapping[str, Any], None] = None,
    mode: str = "supervised",
) -> ExperimentConfig:
    """Build a validated ExperimentConfig from file bytes and overrides.

    Absent keys take the defaults (likelihood ``diag(3, 1)`` and a
    zero-mean, unit-variance prior); overrides are applied last.
    """
    if mode not in MODE_DEFAULTS:
        raise UsageError(f"unknown mode {mode!r}")
    values: dict[str, Any] = dict(MODE_DEFAULTS[mode])

    if data is not None:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        if text.strip():
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config is not valid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise UsageError("config must be a flat JSON object")
            for key, value in doc.items():
                _check_key(key)
                if isinstance(value, dict):
                    raise UsageError(f"config key {key!r} must not be nested")
                values[key] = FIELDS[key](key, value)

    if overrides is not None:
        pairs = overrides.items() if isinstance(overrides, Mapping) else (split_override(o) for o in overrides)
        for key, value in pairs:
            _check_key(key)
            values[key] = FIELDS[key](key, value)

    prior_keys = ("mean_theta", "mean_psi", "var_theta", "var_psi")
    rho_list = values.pop("rho_list", None)
    prior_kw = {k: values.pop(k) for k in prior_keys if k in values}
    lik_kw = {k: values.pop(k) for k in ("var_x", "var_eta") if k in values}
    if rho_list is not None:
        values["rho_list"] = rho_list
        for r in rho_list:
            if not abs(r) < 1:
                raise ValidationError(f"rho_list: every rho must satisfy |rho| < 1, got {r}")
    rhos = rho_list if rho_list is not None else ExperimentConfig.rho_list
    prior = PriorSpec(rho=rhos[0] if rhos else 0.0, **prior_kw)
    return ExperimentConfig(prior=prior, lik=LikelihoodSpec(**lik_kw), mode=mode, **values)
