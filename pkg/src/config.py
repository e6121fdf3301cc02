"""
Run configuration: every constant of the aggregation, wake-up and evaluation
layers is configurable at runtime.

Load order:
  1. Built-in defaults.
  2. JSON config file (explicit path, or the ``BOAS_CONFIG_FILE`` env var).
  3. Individual environment variable overrides (``BOAS_*`` prefix).

Reference: expert-aggregation-layer.md §Configuration
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from src.observability.logging import get_logger

logger = get_logger(__name__)

# ---------------------------------------------------------------------------
# Layer version: bump on every change that alters ledgers or reports
# ---------------------------------------------------------------------------
LAYER_VERSION = "1.0.0"

STRATEGIES: tuple[str, ...] = (
    "boa_unbiased",
    "boa",
    "boa_sleeping",
    "ftl_boa",
    "ftl_boa_regularized",
    "fixed_share",
)

ORACLE_MODES: tuple[str, ...] = ("none", "oracle_class", "oracle_expert")

WAKE_GROUPS: tuple[str, ...] = ("low", "high")


class ConfigError(ValueError):
    """Raised when a configuration value is out of range or inconsistent."""


# ---------------------------------------------------------------------------
# Expert roster entries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpertSpec:
    """Configuration of one expert column."""

    name: str
    biased: bool = False
    quantile: bool = False
    """Member of the ensemble quantile family used by the quantile-spread features."""

    wake_group: str | None = None
    """``"low"`` is woken on class 3 (aggregation too warm), ``"high"`` on class 1."""

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExpertSpec:
        return cls(
            name=str(raw["name"]),
            biased=bool(raw.get("biased", False)),
            quantile=bool(raw.get("quantile", False)),
            wake_group=raw.get("wake_group"),
        )


def default_roster() -> list[ExpertSpec]:
    """Six deterministic models plus five ensemble quantiles, the outer four biased."""
    deterministic = [
        ExpertSpec(name)
        for name in ("raw.aro", "mos.aro", "raw.arp", "mos.arp", "raw.cep", "mos.cep")
    ]
    quantiles = [
        ExpertSpec("Q10", biased=True, quantile=True, wake_group="low"),
        ExpertSpec("Q30", biased=True, quantile=True, wake_group="low"),
        ExpertSpec("Q50", quantile=True),
        ExpertSpec("Q70", biased=True, quantile=True, wake_group="high"),
        ExpertSpec("Q90", biased=True, quantile=True, wake_group="high"),
    ]
    return deterministic + quantiles


# ---------------------------------------------------------------------------
# Boosted-forest hyperparameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters of the 3-class boosted forest (tuned grid winner as defaults)."""

    n_rounds: int = 3
    max_depth: int = 8
    learning_rate: float = 1.0
    min_child_weight: float = 25.0
    colsample_per_node: float = 0.85
    reg_lambda: float = 1.0

    def validate(self) -> None:
        if self.n_rounds < 1:
            raise ConfigError("forest.n_rounds must be >= 1")
        if self.max_depth < 0:
            raise ConfigError("forest.max_depth must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("forest.learning_rate must be > 0")
        if self.min_child_weight < 0:
            raise ConfigError("forest.min_child_weight must be >= 0")
        if not 0.0 < self.colsample_per_node <= 1.0:
            raise ConfigError("forest.colsample_per_node must be in (0, 1]")
        if self.reg_lambda < 0:
            raise ConfigError("forest.reg_lambda must be >= 0")


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """All runtime-tunable parameters of a run."""

    # --- I/O ---
    input_path: str | None = None
    output_dir: str = "out"

    # --- Experts ---
    roster: list[ExpertSpec] = field(default_factory=default_roster)

    # --- Wake-up classifier ---
    wake_threshold: float = 2.5
    """|error| at or above which the unbiased aggregation is labelled as badly wrong (°C)."""

    activation_round: int = 100
    """Completed past rounds required before the classifier is trained and used."""

    oversample_factor: int = 5
    retrain_stride: int = 1
    forest: ForestParams = field(default_factory=ForestParams)
    rng_seed: int = 0

    # --- Kalman feature ---
    kalman_process_noise: float = 0.01
    kalman_observation_noise: float = 1.0
    kalman_expert_preference: list[str] = field(
        default_factory=lambda: ["raw.aro", "raw.arp"]
    )

    # --- Aggregation strategies ---
    eta_max: float = 1.0
    ftl_regularizer: float = 0.0025
    fixed_share_alpha: float = 0.01
    fixed_share_learning_rate: float = 0.1
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    oracle_mode: str = "none"

    # --- Execution ---
    n_jobs: int = 1
    log_shap: bool = True
    run_step: str = "1D"
    """Expected spacing between consecutive run dates of a stream (pandas offset alias)."""

    # ------------------------------------------------------------------
    # Factory helpers
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            logger.warning("config_unknown_keys", keys=unknown)
        kwargs = {k: v for k, v in raw.items() if k in known}
        if "roster" in kwargs:
            kwargs["roster"] = [ExpertSpec.from_dict(e) for e in kwargs["roster"]]
        if "forest" in kwargs:
            kwargs["forest"] = ForestParams(**kwargs["forest"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        p = Path(path)
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {p}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        cfg = cls.from_dict(raw)
        logger.info("config_loaded", path=str(p))
        return cfg

    @classmethod
    def from_env(cls, path: str | Path | None = None) -> RunConfig:
        """Build config from an optional file and ``BOAS_*`` overrides, then validate."""
        config_file = path or os.environ.get("BOAS_CONFIG_FILE")
        cfg = cls.from_file(config_file) if config_file else cls()
        _apply_env_overrides(cfg)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    # ------------------------------------------------------------------
    # Validation and lookups
    # ------------------------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`ConfigError` on the first inconsistent value."""
        if self.wake_threshold <= 0:
            raise ConfigError("wake_threshold must be > 0")
        if self.activation_round < 1:
            raise ConfigError("activation_round must be >= 1")
        if self.oversample_factor < 1:
            raise ConfigError("oversample_factor must be >= 1")
        if self.retrain_stride < 1:
            raise ConfigError("retrain_stride must be >= 1")
        if not 0.0 <= self.fixed_share_alpha <= 1.0:
            raise ConfigError("fixed_share_alpha must be in [0, 1]")
        if self.fixed_share_learning_rate <= 0:
            raise ConfigError("fixed_share_learning_rate must be > 0")
        if self.ftl_regularizer < 0:
            raise ConfigError("ftl_regularizer must be >= 0")
        if self.eta_max <= 0:
            raise ConfigError("eta_max must be > 0")
        if self.kalman_process_noise < 0 or self.kalman_observation_noise <= 0:
            raise ConfigError("kalman noises must be process >= 0 and observation > 0")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if self.oracle_mode not in ORACLE_MODES:
            raise ConfigError(f"oracle_mode must be one of {ORACLE_MODES}")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies: {bad}")

        names = [e.name for e in self.roster]
        if not names:
            raise ConfigError("roster must not be empty")
        if len(set(names)) != len(names):
            raise ConfigError("roster names must be unique")
        for e in self.roster:
            if e.wake_group is not None and e.wake_group not in WAKE_GROUPS:
                raise ConfigError(f"expert {e.name}: wake_group must be one of {WAKE_GROUPS}")
        if all(e.biased for e in self.roster):
            raise ConfigError("roster needs at least one unbiased (always-awake) expert")
        self.forest.validate()

    def expert_spec(self, name: str) -> ExpertSpec:
        """Return the roster entry for *name*; unknown columns are plain unbiased experts."""
        for e in self.roster:
            if e.name == name:
                return e
        return ExpertSpec(name)


# ---------------------------------------------------------------------------
# Internal helpers
# ---------------------------------------------------------------------------


def _apply_env_overrides(cfg: RunConfig) -> None:
    """Apply individual BOAS_* environment variable overrides to *cfg* in-place."""
    casts: dict[str, tuple[str, type]] = {
        "BOAS_INPUT_PATH": ("input_path", str),
        "BOAS_OUTPUT_DIR": ("output_dir", str),
        "BOAS_WAKE_THRESHOLD": ("wake_threshold", float),
        "BOAS_ACTIVATION_ROUND": ("activation_round", int),
        "BOAS_OVERSAMPLE_FACTOR": ("oversample_factor", int),
        "BOAS_RETRAIN_STRIDE": ("retrain_stride", int),
        "BOAS_RNG_SEED": ("rng_seed", int),
        "BOAS_FTL_REGULARIZER": ("ftl_regularizer", float),
        "BOAS_FIXED_SHARE_ALPHA": ("fixed_share_alpha", float),
        "BOAS_ORACLE_MODE": ("oracle_mode", str),
        "BOAS_N_JOBS": ("n_jobs", int),
    }
    for env_key, (attr, cast) in casts.items():
        v = os.environ.get(env_key)
        if v is None:
            continue
        try:
            setattr(cfg, attr, cast(v))
        except ValueError as exc:
            raise ConfigError(f"{env_key}={v!r}: {exc}") from exc

    log_shap = os.environ.get("BOAS_LOG_SHAP", "").lower()
    if log_shap in ("true", "1", "yes"):
        cfg.log_shap = True
    elif log_shap in ("false", "0", "no"):
        cfg.log_shap = False
