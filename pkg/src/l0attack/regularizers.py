"""Sparsity penalties, the composite attack objective and the adaptive sigma schedule."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Node

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-5
SIGMA_MIN = 1e-6
SIGMA_MAX = 1e3


class RegularizerKind(str, enum.Enum):
    ASL0 = "asl0"
    L1 = "l1"
    L2 = "l2"
    NONE = "none"


@dataclass(frozen=True)
class Regularizer:
    """A penalty kind together with its weight ``lam`` in the objective."""

    kind: RegularizerKind = RegularizerKind.NONE
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        object.__setattr__(self, "kind", RegularizerKind(self.kind))
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be a finite value >= 0, got {self.lam}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "Regularizer":
        return cls(kind=d["kind"], lam=float(d.get("lambda", DEFAULT_LAMBDA)))


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not sigma > 0.0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be a positive finite number, got {sigma}")
    return sigma


def l0_approx(delta, sigma: float):
    """Smooth count of nonzero entries: sum of d_i^2 / (d_i^2 + sigma^2).

    Returns a float for array input and a recorded ``Node`` when ``delta`` is a
    node, so the same code path feeds both evaluation and differentiation.
    """
    sigma = _check_sigma(sigma)
    sq = ag.square(delta)
    out = ag.sum(ag.div(sq, ag.add(sq, sigma * sigma)))
    return out if isinstance(out, Node) else float(out)


def l0_approx_grad(delta, sigma: float) -> np.ndarray:
    """Closed-form gradient 2 d_i sigma^2 / (d_i^2 + sigma^2)^2."""
    sigma = _check_sigma(sigma)
    delta = ag.as_array(delta)
    s2 = sigma * sigma
    return 2.0 * delta * s2 / (delta * delta + s2) ** 2


def penalty(kind: RegularizerKind | str, delta, sigma: float = 1.0):
    """Unweighted penalty value; ``lam`` is applied by :func:`objective`."""
    kind = RegularizerKind(kind)
    if kind is RegularizerKind.ASL0:
        return l0_approx(delta, sigma)
    if kind is RegularizerKind.L1:
        out = ag.sum(ag.absolute(delta))
    elif kind is RegularizerKind.L2:
        out = ag.sum(ag.square(delta))
    else:
        return 0.0
    return out if isinstance(out, Node) else float(out)


def objective(model, x, y: int, delta, regularizer: Regularizer, sigma: float = 1.0,
              attack: str = "pgd", kappa: float = 0.0):
    """Return ``(J, L, penalty)`` with ``J = L + lam * penalty``.

    ``L`` is the attack loss for ``attack`` (negated cross-entropy for the PGD
    family, floored logit margin for the CW family). When ``delta`` is a node
    the three values are nodes on its tape and ``J`` can be differentiated.
    """
    from .attacks import attack_loss

    logits = model.forward(ag.add(ag.as_array(x), delta))
    loss = attack_loss(attack, logits, y, kappa)
    pen = penalty(regularizer.kind, delta, sigma)
    total = ag.add(loss, ag.mul(regularizer.lam, pen))
    if not isinstance(total, Node):
        return float(total), float(loss), float(pen)
    return total, loss, pen


@dataclass(frozen=True)
class SigmaController:
    """State of the multiplicative sigma schedule.

    ``j_star`` is the objective threshold below which a progressing attack may
    sharpen the surrogate; ``None`` until the attack anchors it to its first
    objective value.
    """

    sigma: float = 1.0
    eta_d: float = 0.9
    eta_i: float = 1.1
    j_star: float | None = None
    best_objective: float = math.inf
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not 0.0 < self.eta_d < 1.0:
            raise ValueError(f"decay rate must lie in (0, 1), got {self.eta_d}")
        if not self.eta_i > 1.0 or not math.isfinite(self.eta_i):
            raise ValueError(f"increase rate must be > 1, got {self.eta_i}")
        if not 0.0 < self.sigma_min <= self.sigma_max:
            raise ValueError("need 0 < sigma_min <= sigma_max")

    def decays(self, attack_progressed: bool, objective_value: float) -> bool:
        return bool(attack_progressed) and self.j_star is not None and objective_value < self.j_star


def sigma_update(ctrl: SigmaController, attack_progressed: bool, objective_value: float) -> SigmaController:
    """One step of the schedule: shrink sigma on progress below ``j_star``, grow it otherwise."""
    objective_value = float(objective_value)
    if not math.isfinite(objective_value):
        raise ag.NonFiniteError(f"objective is not finite: {objective_value}")
    rate = ctrl.eta_d if ctrl.decays(attack_progressed, objective_value) else ctrl.eta_i
    sigma = rate * ctrl.sigma
    clamped = min(max(sigma, ctrl.sigma_min), ctrl.sigma_max)
    if clamped != sigma:
        logger.debug("sigma %.3g clamped to %.3g", sigma, clamped)
    return dataclasses.replace(
        ctrl, sigma=clamped, best_objective=min(ctrl.best_objective, objective_value)
    )
