"""Run configuration: flat key=value files, with environment variables
(GTFREC_<KEY>) overriding file values and CLI flags overriding both."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .filtering import FilterConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


# key -> (type, default)
SCHEMA = {
    "train_file": (str, ""),
    "test_file": (str, ""),
    "users": (int, 500),
    "items": (int, 800),
    "interactions": (int, 20000),
    "blocks": (int, 5),
    "noise_frac": (float, 0.1),
    "embed_dim": (int, 64),
    "learning_rate": (float, 1e-3),
    "batch_size": (int, 1024),
    "l2_alpha": (float, 1e-4),
    "epochs": (int, 100),
    "lam": (float, 2.0),
    "layers": (int, 3),
    "gamma": (float, 1.0),
    "beta": (float, 0.5),
    "eval_k": (str, "20"),
    "backend": (str, "gtn"),
    "seed": (int, 0),
    "out": (str, "runs"),
}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def ks(self) -> list[int]:
        return [int(v) for v in str(self.values["eval_k"]).split(",") if v.strip()]

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            embed_dim=self.values["embed_dim"],
            learning_rate=self.values["learning_rate"],
            batch_size=self.values["batch_size"],
            l2_alpha=self.values["l2_alpha"],
            epochs=self.values["epochs"],
            seed=self.values["seed"],
            filter=self.filter_config(),
        )

    def filter_config(self, record_trace: bool = False) -> FilterConfig:
        return FilterConfig(
            lam=self.values["lam"],
            num_layers=self.values["layers"],
            gamma=self.values["gamma"],
            beta=self.values["beta"],
            record_trace=record_trace,
        )

    def dump(self, path) -> None:
        """Echo the fully resolved configuration for reproducibility."""
        with open(path, "w") as fh:
            for key in SCHEMA:
                fh.write(f"{key} = {self.values[key]}\n")


def _coerce(key: str, raw: str):
    typ, _ = SCHEMA[key]
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def load_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve defaults < config file < environment < explicit overrides."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if config_path:
        values.update(parse_config_file(config_path))
    for key in SCHEMA:
        env = os.environ.get(f"GTFREC_{key.upper()}")
        if env is not None:
            values[key] = _coerce(key, env)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    return RunConfig(values)
