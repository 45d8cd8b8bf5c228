from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError
from ..nn.network import NetworkConfig
from ..physics import LossWeights


class UqMethod(enum.Enum):
    MC_DROPOUT = "mc_dropout"
    DEEP_ENSEMBLE = "deep_ensemble"
    FULL_BNN = "full_bnn"
    PARTIAL_BNN = "partial_bnn"
    GP_BASELINE = "gp"

    @property
    def is_neural(self) -> bool:
        return self is not UqMethod.GP_BASELINE

    @classmethod
    def parse(cls, value) -> "UqMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown method {value!r}; expected one of: {names}") from None


@dataclass(frozen=True)
class MethodParams:
    mc_passes: int = 50
    ensemble_size: int = 5
    bnn_samples: int = 50
    prior_std: float = 0.1
    init_std_scale: float = 0.01
    gp_max_train: int = 1000
    gp_noise_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    gp_holdout_fraction: float = 0.2

    def __post_init__(self):
        for name in ("mc_passes", "ensemble_size", "bnn_samples", "gp_max_train"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.prior_std <= 0 or self.init_std_scale <= 0:
            raise ConfigError("prior_std and init_std_scale must be positive")
        if not self.gp_noise_grid or any(v <= 0 for v in self.gp_noise_grid):
            raise ConfigError("gp_noise_grid must hold positive values")


@dataclass(frozen=True)
class TrainConfig:
    method: UqMethod = UqMethod.FULL_BNN
    physics_on: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    method_params: MethodParams = field(default_factory=MethodParams)

    def __post_init__(self):
        object.__setattr__(self, "method", UqMethod.parse(self.method))
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        if isinstance(self.network, dict):
            object.__setattr__(self, "network", NetworkConfig(**self.network))
        if isinstance(self.method_params, dict):
            mp = {k: (tuple(v) if isinstance(v, list) else v) for k, v in self.method_params.items()}
            object.__setattr__(self, "method_params", MethodParams(**mp))
        if self.physics_on and self.method is UqMethod.GP_BASELINE:
            raise ConfigError("the GP baseline has no physics-informed variant")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ConfigError("learning rate must be nonnegative")

    @property
    def effective_weights(self) -> LossWeights:
        """Loss weights actually used: physics terms zeroed when physics is off."""
        if self.physics_on:
            return self.weights
        return LossWeights.data_only(self.weights.lambda_data)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["method_params"]["gp_noise_grid"] = list(self.method_params.gp_noise_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(f"invalid train config: {err}") from None
