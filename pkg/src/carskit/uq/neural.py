"""Neural UQ strategies: MC-Dropout, deep ensembles, full and partial BNNs.

All four share one residual backbone and one training loop; they differ in
the data term, in which weights are stochastic, and in how the predictive
Gaussian is assembled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..errors import DataError, NumericError
from ..nn import network as net
from ..nn import tensor as T
from ..nn.optim import Adam
from ..nn.tensor import Tensor
from ..physics import kk_loss, smoothness_loss, total_loss
from ..spectrum import VARIANCE_FLOOR, PredictiveDistribution
from .config import TrainConfig, UqMethod

_LOG_2PI = math.log(2.0 * math.pi)
PREDICT_CHUNK = 64


class TrainingAborted(NumericError):
    """Non-finite loss; ``predictor`` holds the parameters from the last good epoch."""

    def __init__(self, message, predictor=None):
        super().__init__(message)
        self.predictor = predictor


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


# stream keys; the member index is appended
_TRAIN_KEY, _PREDICT_KEY, _INIT_KEY = 1, 2, 3


def gaussian_nll(y, mu: Tensor, var: Tensor) -> Tensor:
    """Mean negative Gaussian log-density; ``var`` may broadcast against ``mu``."""
    resid = T.sub(y, mu)
    return T.mean(T.log(var) + T.square(resid) / var) * 0.5 + 0.5 * _LOG_2PI


# -- variational machinery -------------------------------------------------------

@dataclass
class VariationalParam:
    """Diagonal Gaussian ``N(mu, softplus(rho)^2)`` against a ``N(0, prior_std^2)`` prior."""

    mu: Tensor
    rho: Tensor
    prior_std: float

    @property
    def std(self) -> np.ndarray:
        return np.logaddexp(0.0, self.rho.data)


def rho_for_std(std: float) -> float:
    """Inverse softplus."""
    return float(std + np.log(-np.expm1(-std)))


def kl_gaussian(q: VariationalParam, prior_std: float | None = None) -> Tensor:
    """KL(q || N(0, prior_std^2)) summed over all elements, differentiable."""
    s_p = q.prior_std if prior_std is None else prior_std
    ratio = T.softplus(q.rho) * (1.0 / s_p)
    scaled_mu = q.mu * (1.0 / s_p)
    per_elem = (T.square(ratio) + T.square(scaled_mu) - 1.0) * 0.5 - T.log(ratio)
    return T.sum(per_elem)


class VariationalWeights:
    def __init__(self, init_mu: Mapping[str, np.ndarray], prior_std: float, init_std: float):
        rho0 = rho_for_std(init_std)
        self.prior_std = prior_std
        self.q = {
            n: VariationalParam(T.parameter(m, name=f"{n}.mu"), T.parameter(np.full(m.shape, rho0), name=f"{n}.rho"), prior_std)
            for n, m in init_mu.items()
        }

    def sample(self, rng: np.random.Generator, track: bool = True) -> dict[str, Tensor]:
        out = {}
        for n, q in self.q.items():
            eps = rng.standard_normal(q.mu.shape)
            if track:
                out[n] = q.mu + T.softplus(q.rho) * eps
            else:
                out[n] = Tensor(q.mu.data + q.std * eps)
        return out

    def kl(self) -> Tensor:
        total = None
        for q in self.q.values():
            term = kl_gaussian(q)
            total = term if total is None else total + term
        return total

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for n, q in self.q.items():
            params[f"{n}.mu"] = q.mu
            params[f"{n}.rho"] = q.rho
        return params


def moment_match(means: np.ndarray, variances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse an equally weighted Gaussian mixture (leading axis) to one Gaussian."""
    mean = means.mean(axis=0)
    second = (variances + means**2).mean(axis=0)
    return mean, np.maximum(second - mean**2, 0.0)


# -- predictors ------------------------------------------------------------------

class NeuralPredictor:
    method: UqMethod

    def __init__(self, config: TrainConfig):
        self.config = config
        self.netcfg = network_config_for(config)

    def predict(self, x) -> PredictiveDistribution:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        means, variances, nrbs = [], [], []
        rng = stream(self.config.seed, _PREDICT_KEY)
        for start in range(0, len(xb), PREDICT_CHUNK):
            m, v, b = self._predict_batch(xb[start : start + PREDICT_CHUNK], rng)
            means.append(m)
            variances.append(v)
            nrbs.append(b)
        mean = np.concatenate(means)
        var = np.maximum(np.concatenate(variances), VARIANCE_FLOOR)
        nrb = np.concatenate(nrbs)
        if single:
            return PredictiveDistribution(mean[0], var[0], nrb[0])
        return PredictiveDistribution(mean, var, nrb)

    def _predict_batch(self, x, rng):
        raise NotImplementedError

    # every trainable tensor, keyed by checkpoint name
    def parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.parameters().items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise DataError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for n, p in params.items():
            if state[n].shape != p.data.shape:
                raise DataError(f"checkpoint parameter {n!r} has shape {state[n].shape}, expected {p.data.shape}")
            p.data = np.array(state[n], dtype=np.float64, copy=True)


def network_config_for(config: TrainConfig) -> net.NetworkConfig:
    needs_var = config.method is not UqMethod.MC_DROPOUT
    return net.NetworkConfig(**{**config.network.to_dict(), "variance_head": needs_var})


class McDropoutPredictor(NeuralPredictor):
    """Dropout stays on at test time; a learned scalar carries the noise level."""

    method = UqMethod.MC_DROPOUT

    def __init__(self, config: TrainConfig, params: Mapping[str, np.ndarray] | None = None):
        super().__init__(config)
        params = params or net.init_parameters(self.netcfg, stream(config.seed, _INIT_KEY, 0))
        self.network = net.Network(self.netcfg, params)
        self.log_noise_var = T.parameter(np.array([math.log(0.01)]), name="log_noise_var")

    def parameters(self):
        return {**self.network.params, "log_noise_var": self.log_noise_var}

    def training_step(self, x, y, rng, _n_points):
        out = self.network(x, training=True, rng=rng)
        var = T.exp(self.log_noise_var)
        return gaussian_nll(y, out.raman, var), out

    def _predict_batch(self, x, rng):
        passes = self.config.method_params.mc_passes
        return self.predict_passes(x, rng, passes)

    def predict_passes(self, x, rng, passes):
        xt = Tensor(x)
        raman = np.empty((passes,) + x.shape)
        nrb = np.zeros(x.shape)
        for t in range(passes):
            out = net.forward(self.netcfg, _frozen(self.network.params), xt, training=True, rng=rng)
            raman[t] = out.raman.data
            nrb += out.nrb.data
        noise = math.exp(float(self.log_noise_var.data[0]))
        return raman.mean(axis=0), raman.var(axis=0) + noise, nrb / passes


class EnsemblePredictor(NeuralPredictor):
    method = UqMethod.DEEP_ENSEMBLE

    def __init__(self, config: TrainConfig, members: list[Mapping[str, np.ndarray]] | None = None):
        super().__init__(config)
        m = config.method_params.ensemble_size
        if members is None:
            members = [net.init_parameters(self.netcfg, stream(config.seed, _INIT_KEY, k)) for k in range(m)]
        self.members = [net.Network(self.netcfg, p) for p in members]

    def parameters(self):
        return {f"member{k}.{n}": p for k, mem in enumerate(self.members) for n, p in mem.params.items()}

    def member_moments(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xt = Tensor(x)
        outs = [net.forward(self.netcfg, _frozen(m.params), xt) for m in self.members]
        means = np.stack([o.raman.data for o in outs])
        variances = np.stack([o.variance.data for o in outs])
        nrbs = np.stack([o.nrb.data for o in outs])
        return means, variances, nrbs

    def _predict_batch(self, x, rng):
        means, variances, nrbs = self.member_moments(x)
        mean, var = moment_match(means, variances)
        return mean, var, nrbs.mean(axis=0)


class BnnPredictor(NeuralPredictor):
    """Mean-field Gaussian posterior over all weights (full) or only the heads (partial)."""

    def __init__(self, config: TrainConfig, state: Mapping[str, np.ndarray] | None = None):
        super().__init__(config)
        self.method = config.method
        mp = config.method_params
        init = net.init_parameters(self.netcfg, stream(config.seed, _INIT_KEY, 0))
        if self.method is UqMethod.FULL_BNN:
            var_names = list(init)
        else:
            var_names = net.head_parameter_names(self.netcfg)
        self.deterministic = {n: T.parameter(v, name=n) for n, v in init.items() if n not in var_names}
        self.variational = VariationalWeights(
            {n: init[n] for n in var_names}, mp.prior_std, mp.init_std_scale * mp.prior_std
        )
        if state is not None:
            self.load_state(state)

    def parameters(self):
        return {**self.deterministic, **self.variational.parameters()}

    def kl(self) -> Tensor:
        return self.variational.kl()

    def training_step(self, x, y, rng, n_points):
        weights = {**self.deterministic, **self.variational.sample(rng)}
        out = net.forward(self.netcfg, weights, x, training=True, rng=rng)
        nll = gaussian_nll(y, out.raman, out.variance)
        # mean-NLL ELBO: KL spread over every training point
        return nll + self.kl() * (1.0 / n_points), out

    def _predict_batch(self, x, rng):
        S = self.config.method_params.bnn_samples
        xt = Tensor(x)
        det = _frozen(self.deterministic)
        means = np.empty((S,) + x.shape)
        variances = np.empty((S,) + x.shape)
        nrb = np.zeros(x.shape)
        for s in range(S):
            weights = {**det, **self.variational.sample(rng, track=False)}
            out = net.forward(self.netcfg, weights, xt)
            means[s] = out.raman.data
            variances[s] = out.variance.data
            nrb += out.nrb.data
        mean, var = moment_match(means, variances)
        return mean, var, nrb / S


def _frozen(params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    return {n: Tensor(p.data) for n, p in params.items()}


# -- training -----------------------------------------------------------------------

LogFn = Callable[[dict], None]


def _fit(
    config: TrainConfig,
    params: Mapping[str, Tensor],
    step: Callable,
    cars: np.ndarray,
    raman: np.ndarray,
    rng: np.random.Generator,
    member: int,
    log: LogFn | None,
    on_abort: Callable[[], object],
) -> None:
    w = config.effective_weights
    n = len(cars)
    bs = min(config.batch_size, n)
    n_batches = math.ceil(n / bs)
    n_points = cars.size
    opt = Adam(params, lr=config.lr)
    for epoch in range(config.epochs):
        snapshot = {k: p.data.copy() for k, p in params.items()}
        perm = rng.permutation(n)
        sums = np.zeros(4)
        for b in range(n_batches):
            idx = perm[b * bs : (b + 1) * bs]
            x, y = cars[idx], raman[idx]
            data_term, out = step(Tensor(x), y, rng, n_points)
            kk = kk_loss(out.raman, out.nrb, x) if w.lambda_kk > 0 else None
            smooth = smoothness_loss(out.nrb) if w.lambda_smooth > 0 else None
            loss, bd = total_loss(data_term, kk, smooth, w)
            if not math.isfinite(bd.total):
                for k, p in params.items():
                    p.data = snapshot[k]
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, batch {b} (member {member})", on_abort()
                )
            loss.backward()
            opt.step()
            sums += (bd.data_term, bd.kk_term, bd.smooth_term, bd.total)
        if log is not None:
            avg = sums / n_batches
            log({"member": member, "epoch": epoch, "data_term": avg[0], "kk_term": avg[1],
                 "smooth_term": avg[2], "total": avg[3]})


def train_neural(config: TrainConfig, cars: np.ndarray, raman: np.ndarray, log: LogFn | None = None) -> NeuralPredictor:
    method = config.method
    if method is UqMethod.MC_DROPOUT:
        pred = McDropoutPredictor(config)
        _fit(config, pred.parameters(), pred.training_step, cars, raman,
             stream(config.seed, _TRAIN_KEY, 0), 0, log, lambda: pred)
        return pred
    if method is UqMethod.DEEP_ENSEMBLE:
        pred = EnsemblePredictor(config)
        for k, member in enumerate(pred.members):
            def step(x, y, rng, _n, member=member):
                out = member(x, training=True, rng=rng)
                return gaussian_nll(y, out.raman, out.variance), out
            _fit(config, member.params, step, cars, raman,
                 stream(config.seed, _TRAIN_KEY, k), k, log, lambda: pred)
        return pred
    if method in (UqMethod.FULL_BNN, UqMethod.PARTIAL_BNN):
        pred = BnnPredictor(config)
        _fit(config, pred.parameters(), pred.training_step, cars, raman,
             stream(config.seed, _TRAIN_KEY, 0), 0, log, lambda: pred)
        return pred
    raise ValueError(f"{method} is not a neural method")


def neural_from_state(config: TrainConfig, state: Mapping[str, np.ndarray]) -> NeuralPredictor:
    method = config.method
    if method is UqMethod.MC_DROPOUT:
        pred = McDropoutPredictor(config)
    elif method is UqMethod.DEEP_ENSEMBLE:
        pred = EnsemblePredictor(config)
    else:
        pred = BnnPredictor(config)
    pred.load_state(state)
    return pred
