"""Run configuration: one flat key-value namespace covering every stage.

Files use ``key = value`` lines (``#`` comments allowed); any key can also be
overridden on the command line with ``--set key=value``. Unknown keys are
rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .cascade import FailureSimConfig
from .encoder import EncoderConfig
from .ranking import TrainConfig
from .walks import WalkConfig

DEFAULTS: dict[str, float | int] = {
    "decay_base": 2.0,
    "walk.alpha": 0.6,
    "walk.beta": 0.8,
    "walk.epsilon": 0.5,
    "walk.num": 25,
    "walk.len": 20,
    "walk.seed": 0,
    "encoder.d_model": 64,
    "encoder.n_layers": 6,
    "encoder.n_heads": 8,
    "encoder.d_ff": 256,
    "encoder.dropout": 0.1,
    "encoder.max_seq_tokens": 0,  # 0: derive as 2 * walk.len
    "train.k_list": 5,
    "train.lists_per_epoch": 64,
    "train.epochs": 50,
    "train.lr": 0.001,
    "train.lr_decay": 1.0,
    "train.average_last": 0,
    "train.dropout": 0.5,
    "train.seed": 0,
    "train.fraction": 0.7,
    "sim.speed_factor": 0.1,
    "sim.fail_threshold": 0.1,
    "sim.overload_ratio": 1.0,
    "sim.horizon": 10,
    "sim.gamma": 0.9,
    "eval.ndcg_k": 0,  # 0: k = list size
    "chain.node_cap": 2000,
    "threads": 1,
}

_INT_KEYS = {
    "walk.num",
    "walk.len",
    "walk.seed",
    "encoder.d_model",
    "encoder.n_layers",
    "encoder.n_heads",
    "encoder.d_ff",
    "encoder.max_seq_tokens",
    "train.k_list",
    "train.lists_per_epoch",
    "train.epochs",
    "train.seed",
    "train.average_last",
    "sim.horizon",
    "eval.ndcg_k",
    "chain.node_cap",
    "threads",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict[str, float | int] = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw: str | float | int) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(raw, str):
            try:
                self.values[key] = int(raw) if key in _INT_KEYS else float(raw)
            except ValueError:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
        else:
            self.values[key] = int(raw) if key in _INT_KEYS else float(raw)

    def walk_config(self) -> WalkConfig:
        v = self.values
        return WalkConfig(
            alpha=v["walk.alpha"],
            beta=v["walk.beta"],
            epsilon=v["walk.epsilon"],
            num=v["walk.num"],
            len=v["walk.len"],
            seed=v["walk.seed"],
        )

    def encoder_config(self) -> EncoderConfig:
        v = self.values
        cap = v["encoder.max_seq_tokens"] or 2 * v["walk.len"]
        return EncoderConfig(
            d_model=v["encoder.d_model"],
            n_layers=v["encoder.n_layers"],
            n_heads=v["encoder.n_heads"],
            d_ff=v["encoder.d_ff"],
            dropout_rate=v["encoder.dropout"],
            max_seq_tokens=cap,
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            k_list=v["train.k_list"],
            lists_per_epoch=v["train.lists_per_epoch"],
            epochs=v["train.epochs"],
            learning_rate=v["train.lr"],
            lr_decay=v["train.lr_decay"],
            average_last_epochs=v["train.average_last"],
            dropout_rate=v["train.dropout"],
            seed=v["train.seed"],
            train_fraction=v["train.fraction"],
        )

    def sim_config(self) -> FailureSimConfig:
        v = self.values
        return FailureSimConfig(
            speed_factor=v["sim.speed_factor"],
            fail_threshold=v["sim.fail_threshold"],
            overload_ratio=v["sim.overload_ratio"],
            horizon_T=v["sim.horizon"],
            gamma=v["sim.gamma"],
        )

    def validate(self) -> "RunConfig":
        """Materialize every sub-config so invariant violations surface early."""
        try:
            self.walk_config()
            self.encoder_config()
            self.train_config()
            self.sim_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return self

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = line.partition("=")
                cfg.set(key.strip(), raw.strip())
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        cfg.set(key.strip(), raw.strip())
    return cfg
