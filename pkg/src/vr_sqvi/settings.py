import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class SqviSettings:
    """Per-workspace defaults applied beneath config files and CLI flags."""

    rho: float = 0.95
    alpha_bar: float = 0.5
    horizon: int = 100
    seed: int = 0
    budget_cap: int = 1000
    batch_cap: int = 0
    workers: int = 1
    residual_every: int = 1
    out: str = "runs"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SqviSettings":
        settings = cls()
        try:
            settings.rho = float(data.get("rho", settings.rho))
            settings.alpha_bar = float(data.get("alpha_bar", settings.alpha_bar))
            settings.horizon = int(data.get("horizon", settings.horizon))
            settings.seed = int(data.get("seed", settings.seed))
            settings.budget_cap = int(data.get("budget_cap", settings.budget_cap))
            settings.batch_cap = int(data.get("batch_cap", settings.batch_cap))
            settings.workers = int(data.get("workers", settings.workers))
            settings.residual_every = int(data.get("residual_every", settings.residual_every))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid stored setting: {exc}", field="settings") from exc
        settings.out = str(data.get("out", settings.out))
        return settings

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def update(self, key: str, value: str) -> None:
        if key not in self.to_dict():
            options = ", ".join(self.to_dict())
            raise ConfigError(f"unknown setting '{key}', available: {options}", field=key)
        current = getattr(self, key)
        try:
            setattr(self, key, type(current)(value))
        except ValueError as exc:
            raise ConfigError(f"invalid value {value!r} for {key}", field=key) from exc


class SettingsStore:
    def __init__(self, workspace: str):
        self.workspace = Path(workspace).resolve()
        self.path = self.workspace / ".sqvi" / "config.json"

    def load(self) -> SqviSettings:
        if not self.path.exists():
            return SqviSettings()
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("ignoring unreadable settings file %s: %s", self.path, exc)
            return SqviSettings()
        if not isinstance(data, dict):
            return SqviSettings()
        return SqviSettings.from_dict(data)

    def save(self, settings: SqviSettings) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(settings.to_dict(), ensure_ascii=True, indent=2),
            encoding="utf-8",
        )
