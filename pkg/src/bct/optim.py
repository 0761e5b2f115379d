"""Parameter update rules: SGD with momentum, Adam, and rectified Adam.

One Optimizer instance owns the moment buffers for a fixed parameter
registry, updates parameters in place in registry order, and skips any
parameter whose name is currently frozen (its value AND its moments stay
untouched, so freezing is fully reversible). The step counter t advances
once per step() call regardless of freezing.

All update arithmetic runs in the parameter's own dtype; the scalar factors
(bias corrections, the rectification multiplier) are computed in float64.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

_KINDS = ("sgd", "adam", "rectadam")


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float | None = None  # None picks the per-kind default
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    _DEFAULT_LR = {"sgd": 0.01, "adam": 0.001, "rectadam": 0.001}

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {_KINDS}")
        lr = self.resolved_lr()
        if not lr > 0:
            raise ValueError(f"learning rate must be > 0, got {lr}")
        if not self.momentum >= 0:
            raise ValueError(f"momentum must be >= 0, got {self.momentum}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 <= b < 1:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def resolved_lr(self) -> float:
        return self._DEFAULT_LR[self.kind] if self.learning_rate is None else self.learning_rate


def rectification_term(t: int, beta2: float) -> tuple[float, float | None]:
    """(rho_t, r_t) for rectified Adam; r_t is None in the un-adapted regime.

    rho_inf = 2/(1-beta2) - 1 and rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t)
    measure how many samples the second moment has effectively seen. While
    rho_t <= 4 the variance estimate is unusable and the step falls back to
    bias-corrected momentum alone.
    """
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    b2t = beta2 ** t
    rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)
    if rho_t <= 4.0:
        return rho_t, None
    r_num = (rho_t - 4.0) * (rho_t - 2.0) * rho_inf
    r_den = (rho_inf - 4.0) * (rho_inf - 2.0) * rho_t
    return rho_t, float(np.sqrt(r_num / r_den))


class Optimizer:
    """Stateful updater for a named parameter registry."""

    def __init__(self, params: dict[str, Tensor], config: OptimizerConfig):
        config.validate()
        if not params:
            raise ValueError("optimizer needs at least one parameter")
        self.config = config
        self.params = dict(params)
        self.t = 0
        self.frozen: frozenset[str] = frozenset()
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        if config.kind in ("adam", "rectadam"):
            self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        else:
            self.v = {}

    def set_freeze(self, names) -> None:
        """Replace the frozen set; every name must exist in the registry."""
        names = frozenset(names)
        unknown = sorted(names - set(self.params))
        if unknown:
            raise KeyError(f"cannot freeze unknown parameters: {unknown}")
        self.frozen = names

    def trainable_names(self) -> list[str]:
        return [n for n in self.params if n not in self.frozen]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Apply one update to every unfrozen parameter, in registry order."""
        self.t += 1
        kind = self.config.kind
        lr = self.config.resolved_lr()
        if kind == "sgd":
            self._step_sgd(lr)
        elif kind == "adam":
            self._step_adam(lr, rectified=False)
        else:
            self._step_adam(lr, rectified=True)

    def _live_params(self):
        for name, p in self.params.items():
            if name in self.frozen:
                continue
            if p.grad is None:
                raise ValueError(f"optimizer step: parameter {name!r} has no gradient")
            yield name, p

    def _step_sgd(self, lr: float) -> None:
        mom = self.config.momentum
        for name, p in self._live_params():
            m = self.m[name]
            m *= p.data.dtype.type(mom)
            m += p.grad
            p.data -= p.data.dtype.type(lr) * m

    def _step_adam(self, lr: float, rectified: bool) -> None:
        cfg = self.config
        b1, b2, eps = cfg.beta1, cfg.beta2, cfg.epsilon
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        if rectified:
            _, r_t = rectification_term(self.t, b2)
        for name, p in self._live_params():
            dt = p.data.dtype.type
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= dt(b1)
            m += dt(1.0 - b1) * g
            v *= dt(b2)
            v += dt(1.0 - b2) * g * g
            m_hat = m / dt(bc1)
            if not rectified:
                p.data -= dt(lr) * m_hat / (np.sqrt(v / dt(bc2)) + dt(eps))
            elif r_t is None:
                # variance still untrustworthy: plain bias-corrected momentum step
                p.data -= dt(lr) * m_hat
            else:
                p.data -= dt(lr * r_t) * m_hat / (np.sqrt(v / dt(bc2)) + dt(eps))
