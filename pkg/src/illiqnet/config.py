"""Pipeline configuration: a flat ``key = value`` file with validated keys."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace

from .cascade import BIN_WIDTH, CRASH_THRESHOLD, LIMIT_TOLERANCE, PEAK_MIN_HEIGHT, PEAK_WINDOW, SHUFFLES
from .dependency import DEFAULT_BINS, DEFAULT_STEP
from .early_warning import INTERVAL_LEN, WINDOW

# worker count changes speed only; input locations vary with where a run lives
_UNHASHED = frozenset({"workers", "quotes_dir", "quotes_format", "metadata", "fear"})


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


@dataclass(frozen=True)
class PipelineConfig:
    quotes_dir: str = "data"
    quotes_format: str = "auto"
    metadata: str = "data/metadata.csv"
    fear: str = ""
    bins: int = DEFAULT_BINS
    step: float = DEFAULT_STEP
    peak_window: int = PEAK_WINDOW
    peak_min_height: int = PEAK_MIN_HEIGHT
    shuffles: int = SHUFFLES
    bin_width: int = BIN_WIDTH
    limit_tolerance: float = LIMIT_TOLERANCE
    interval_len: int = INTERVAL_LEN
    window: int = WINDOW
    sweep_max: int = 15
    crash_threshold: int = CRASH_THRESHOLD
    seed: int = 0
    workers: int = 1
    synth_stocks: int = 50
    synth_days: int = 60
    synth_crash_days: tuple = field(default=(20, 21, 22, 45, 46, 47))
    synth_start: str = "2015-01-05"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.quotes_format in ("auto", "csv", "binary"), "quotes_format must be auto, csv or binary"),
            (2 <= self.bins <= 255, "bins must lie in [2, 255]"),
            (0 < self.step <= 0.5, "step must lie in (0, 0.5]"),
            (self.peak_window >= 1, "peak_window must be >= 1"),
            (self.peak_min_height >= 1, "peak_min_height must be >= 1"),
            (self.shuffles >= 1, "shuffles must be >= 1"),
            (self.bin_width >= 1, "bin_width must be >= 1"),
            (0 <= self.limit_tolerance < 1, "limit_tolerance must lie in [0, 1)"),
            (self.interval_len >= 1, "interval_len must be >= 1"),
            (self.window >= 1, "window must be >= 1"),
            (self.sweep_max >= 1, "sweep_max must be >= 1"),
            (self.crash_threshold >= 0, "crash_threshold must be >= 0"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.synth_stocks >= 4, "synth_stocks must be >= 4"),
            (self.synth_days >= 1, "synth_days must be >= 1"),
            (all(0 <= d < self.synth_days for d in self.synth_crash_days),
             "synth_crash_days must be day indices below synth_days"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    # --- text form ------------------------------------------------------

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        updates = {}
        for key, raw in pairs.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    updates[key] = int(raw)
                elif kind == "float":
                    updates[key] = float(raw)
                elif kind == "tuple":
                    updates[key] = _int_list(raw)
                else:
                    updates[key] = raw.strip()
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return replace(base, **updates)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        """Parse a config file; relative data paths resolve against its directory."""
        pairs = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                k, v = line.split("=", 1)
                k = k.strip()
                if k in pairs:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {k!r}")
                pairs[k] = v.strip()
        cfg = cls.from_pairs(pairs)
        base = os.path.dirname(os.path.abspath(path))
        paths = {}
        for key in ("quotes_dir", "metadata", "fear"):
            val = getattr(cfg, key)
            if val and not os.path.isabs(val):
                paths[key] = os.path.normpath(os.path.join(base, val))
        return replace(cfg, **paths)

    def to_text(self) -> str:
        lines = []
        for key in self.keys():
            val = getattr(self, key)
            if isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def config_hash(self) -> str:
        """16 hex digits over the analysis parameters (not input paths or workers)."""
        text = "\n".join(line for line in self.to_text().splitlines()
                         if line.split(" = ", 1)[0] not in _UNHASHED)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
