import json
from pathlib import Path
from typing import Any

import numpy as np

from .blood import BloodMarket, VolumeKind
from .errors import ConfigError

SCHEMA = "sqvi-market/1"


def _require(data: dict[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise ConfigError("missing required field", field=f"{path}{key}")
    return data[key]


def _matrix(value: Any, shape: tuple[int, ...], field: str) -> np.ndarray:
    if not isinstance(value, list):
        raise ConfigError("expected a list", field=field)
    if len(shape) == 2:
        if len(value) != shape[0]:
            raise ConfigError(f"expected {shape[0]} rows, got {len(value)}", field=field)
        return np.array([_matrix(row, shape[1:], f"{field}[{i}]") for i, row in enumerate(value)])
    if len(value) != shape[0]:
        raise ConfigError(f"expected {shape[0]} entries, got {len(value)}", field=field)
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"expected a number, got {item!r}", field=f"{field}[{i}]")
        out.append(float(item))
    return np.array(out)


def _section(data: dict[str, Any], key: str) -> dict[str, Any]:
    value = _require(data, key, "")
    if not isinstance(value, dict):
        raise ConfigError("expected an object", field=key)
    return value


def market_from_dict(data: Any) -> BloodMarket:
    if not isinstance(data, dict):
        raise ConfigError("market file must contain a JSON object")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema '{schema}', expected '{SCHEMA}'", field="schema")
    n = _require(data, "organizations", "")
    m = _require(data, "locations", "")
    for key, value in (("organizations", n), ("locations", m)):
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ConfigError("expected a positive integer", field=key)
    v = n * m
    volume = _section(data, "volume")
    costs = _section(data, "costs")
    bounds = _section(data, "bounds")
    raw_kind = _require(volume, "kind", "volume.")
    try:
        kind = VolumeKind(raw_kind)
    except ValueError as exc:
        options = ", ".join(k.value for k in VolumeKind)
        raise ConfigError(f"unknown volume kind '{raw_kind}', available: {options}", field="volume.kind") from exc
    multipliers = volume.get("multipliers", [1.0] * v)
    return BloodMarket(
        n_orgs=n,
        n_locations=m,
        prices=_matrix(_require(data, "prices", ""), (n,), "prices"),
        omega=_matrix(_require(data, "omega", ""), (n,), "omega"),
        quality_weights=_matrix(_require(data, "quality_weights", ""), (n, m), "quality_weights"),
        volume_kind=kind,
        volume_coefficients=_matrix(_require(volume, "coefficients", "volume."), (v, v), "volume.coefficients"),
        volume_constants=_matrix(_require(volume, "constants", "volume."), (v,), "volume.constants"),
        volume_multipliers=_matrix(multipliers, (v,), "volume.multipliers"),
        cost_quadratic=_matrix(_require(costs, "quadratic", "costs."), (n, m), "costs.quadratic"),
        cost_fixed=_matrix(_require(costs, "fixed", "costs."), (n, m), "costs.fixed"),
        demand_floors=_matrix(_require(data, "demand_floors", ""), (m,), "demand_floors"),
        lower=_matrix(_require(bounds, "lower", "bounds."), (n, m), "bounds.lower"),
        upper=_matrix(_require(bounds, "upper", "bounds."), (n, m), "bounds.upper"),
        shared_noise=bool(data.get("shared_noise", False)),
        name=str(data.get("name") or "market"),
    )


def market_to_dict(market: BloodMarket) -> dict[str, Any]:
    return {
        "schema": SCHEMA,
        "name": market.name,
        "organizations": market.n_orgs,
        "locations": market.n_locations,
        "prices": market.prices.tolist(),
        "omega": market.omega.tolist(),
        "quality_weights": market.quality_weights.tolist(),
        "volume": {
            "kind": market.volume_kind.value,
            "coefficients": market.volume_coefficients.tolist(),
            "constants": market.volume_constants.tolist(),
            "multipliers": market.volume_multipliers.tolist(),
        },
        "costs": {
            "quadratic": market.cost_quadratic.tolist(),
            "fixed": market.cost_fixed.tolist(),
        },
        "demand_floors": market.demand_floors.tolist(),
        "bounds": {"lower": market.lower.tolist(), "upper": market.upper.tolist()},
        "shared_noise": market.shared_noise,
    }


def load_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc


def load_market(path: str | Path) -> BloodMarket:
    return market_from_dict(load_json(path))


def dump_market(market: BloodMarket, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(market_to_dict(market), ensure_ascii=True, indent=2) + "\n", encoding="utf-8")
    return path
