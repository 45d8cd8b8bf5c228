"""Physics-informed loss terms on autodiff tensors.

The Kramers-Kronig term asks the predicted Raman spectrum to equal the
imaginary part of the Hilbert transform of the background-subtracted CARS
input; the smoothness term penalizes squared forward differences of the
predicted background. Both reduce by the mean over batch and channels.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import ConfigError, DataError
from .nn import tensor as T
from .nn.tensor import Tensor
from .signal_ops import LinearOpTag

DEFAULT_WEIGHTS = (10.0, 1.0, 10.0)


@dataclass(frozen=True)
class LossWeights:
    lambda_data: float = DEFAULT_WEIGHTS[0]
    lambda_kk: float = DEFAULT_WEIGHTS[1]
    lambda_smooth: float = DEFAULT_WEIGHTS[2]

    def __post_init__(self):
        vals = (self.lambda_data, self.lambda_kk, self.lambda_smooth)
        if any(v < 0 for v in vals):
            raise ConfigError(f"loss weights must be nonnegative, got {vals}")
        if not any(v > 0 for v in vals):
            raise ConfigError("at least one loss weight must be positive")

    @property
    def physics_on(self) -> bool:
        return self.lambda_kk > 0 or self.lambda_smooth > 0

    @classmethod
    def data_only(cls, lambda_data: float = DEFAULT_WEIGHTS[0]) -> "LossWeights":
        return cls(lambda_data, 0.0, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    data_term: float
    kk_term: float
    smooth_term: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_same(*tensors: Tensor) -> None:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DataError(f"shape mismatch: {sorted(shapes)}")


def kk_target(y_nrb_hat, x) -> Tensor:
    """``Im[H(x - y_nrb_hat)]``, differentiable in the background estimate."""
    return T.linear_op(T.sub(x, y_nrb_hat), LinearOpTag.HILBERT_IMAG)


def kk_loss(y_raman_hat, y_nrb_hat, x) -> Tensor:
    y_raman_hat, y_nrb_hat, x = T.as_tensor(y_raman_hat), T.as_tensor(y_nrb_hat), T.as_tensor(x)
    _check_same(y_raman_hat, y_nrb_hat, x)
    return T.mean(T.square(y_raman_hat - kk_target(y_nrb_hat, x)))


def smoothness_loss(y_nrb_hat) -> Tensor:
    y_nrb_hat = T.as_tensor(y_nrb_hat)
    if y_nrb_hat.shape[-1] < 2:
        raise DataError("smoothness loss needs at least 2 channels")
    return T.mean(T.square(T.linear_op(y_nrb_hat, LinearOpTag.FIRST_DIFFERENCE)))


def total_loss(data_term, kk_term, smooth_term, w: LossWeights) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of the three terms.

    Zero-weighted terms are left off the graph entirely, so a physics-off
    run receives exactly the gradient of the data term.
    """
    parts = [(w.lambda_data, data_term), (w.lambda_kk, kk_term), (w.lambda_smooth, smooth_term)]
    total = None
    for lam, term in parts:
        if lam == 0 or term is None:
            continue
        weighted = T.as_tensor(term) * lam
        total = weighted if total is None else total + weighted

    def val(t):
        return 0.0 if t is None else float(T.as_tensor(t).data)

    total = T.as_tensor(0.0) if total is None else total
    breakdown = LossBreakdown(val(data_term), val(kk_term), val(smooth_term), float(total.data))
    return total, breakdown
