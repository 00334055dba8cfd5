"""Iterative PGD and CW attacks, optionally wrapped in the adaptive sigma schedule.

All four attack kinds share one descent loop on

    J(delta) = L(f(x + delta), y) + lam * penalty(delta)

where ``L`` is the negated cross-entropy (PGD family, sign steps) or the
floored logit margin (CW family, plain gradient steps). With an ``asl0``
regularizer, :func:`run_as` additionally updates sigma after every iteration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autograd as ag
from .autograd import NonFiniteError, Tape
from .evaluation import close_to_zero_count
from .models import Model, ModelError, predict
from .regularizers import (
    Regularizer,
    RegularizerKind,
    SIGMA_MIN,
    SigmaController,
    penalty,
    sigma_update,
)

CONVERGENCE_TOL = 1e-9
CONVERGENCE_PATIENCE = 10


class AttackKind(str, enum.Enum):
    PGD = "pgd"
    PGD_L2 = "pgd_l2"
    CW = "cw"
    CW_L2 = "cw_l2"

    @property
    def family(self) -> str:
        return "pgd" if self in (AttackKind.PGD, AttackKind.PGD_L2) else "cw"


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind = AttackKind.PGD
    regularizer: Regularizer = field(default_factory=Regularizer)
    iterations: int = 1000
    alpha: float = 0.01
    eps_inf: float = 0.5
    eps_2: float = 2.0
    kappa: float = 0.0
    sigma0: float = 1.0
    eta_d: float = 0.9
    eta_i: float = 1.1
    clamp_range: tuple[float, float] | None = None
    early_stop: bool = False
    keep_ball: bool = True
    epsilon_zero: float = 1e-6
    random_start: bool = False
    seed: int = 0
    stability_floor: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", AttackKind(self.kind))
        except ValueError:
            raise AttackConfigError(f"unknown attack kind {self.kind!r}") from None
        if isinstance(self.regularizer, dict):
            object.__setattr__(self, "regularizer", Regularizer.from_dict(self.regularizer))
        if self.clamp_range is not None:
            object.__setattr__(self, "clamp_range", tuple(float(v) for v in self.clamp_range))
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise AttackConfigError(msg)

        need(int(self.iterations) >= 1, "iterations must be >= 1")
        need(self.alpha > 0 and math.isfinite(self.alpha), "step size alpha must be > 0")
        if self.kind is AttackKind.PGD:
            need(self.eps_inf > 0, "eps_inf must be > 0")
        if self.kind in (AttackKind.PGD_L2, AttackKind.CW_L2):
            need(self.eps_2 > 0, "eps_2 must be > 0")
        need(self.kappa >= 0, "kappa must be >= 0")
        need(self.sigma0 > 0, "sigma0 must be > 0")
        need(self.epsilon_zero > 0, "epsilon_zero must be > 0")
        if self.regularizer.kind is RegularizerKind.ASL0:
            need(0 < self.eta_d < 1, "eta_d must lie in (0, 1)")
            need(self.eta_i > 1, "eta_i must be > 1")
        if self.clamp_range is not None:
            need(len(self.clamp_range) == 2 and self.clamp_range[0] < self.clamp_range[1],
                 "clamp_range must be [lo, hi] with lo < hi")

    @property
    def adaptive(self) -> bool:
        return self.regularizer.kind is RegularizerKind.ASL0

    @property
    def sigma_floor(self) -> float:
        """Lower clamp for sigma.

        Near zero the penalty gradient step shrinks a coordinate by a factor
        ``1 - 2 * alpha * lam / sigma**2``. Below ``sqrt(2 * alpha * lam)`` that
        factor drops under zero and small coordinates oscillate instead of
        vanishing, so with ``stability_floor`` sigma is not allowed below it.
        """
        if not self.stability_floor:
            return SIGMA_MIN
        return max(SIGMA_MIN, math.sqrt(2.0 * self.alpha * self.regularizer.lam))

    @property
    def label(self) -> str:
        """Cell name such as ``AS_cw`` or ``pgd_l2+l1``."""
        reg = self.regularizer.kind
        if reg is RegularizerKind.ASL0:
            return f"AS_{self.kind.value}"
        if reg is RegularizerKind.NONE:
            return self.kind.value
        return f"{self.kind.value}+{reg.value}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["regularizer"] = self.regularizer.to_dict()
        d["clamp_range"] = list(self.clamp_range) if self.clamp_range else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise AttackConfigError(f"unknown attack config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TraceEntry:
    t: int
    objective: float
    loss: float
    penalty: float
    sigma: float
    progressed: bool
    success: bool
    j_star: float | None = None


@dataclass
class AttackOutcome:
    success: bool
    delta: np.ndarray
    iterations_used: int
    l2_distance: float
    close_to_zero: int
    trace: list[TraceEntry]
    final_sigma: float | None = None
    diagnostic: str | None = None


# ---------------------------------------------------------------------------
# building blocks


def attack_loss(kind: AttackKind | str, logits, y: int, kappa: float = 0.0):
    """Loss that the attack *minimises*.

    PGD family: ``-CE(logits, y)``. CW family: ``max(Z_y - max_{j != y} Z_j, -kappa)``.
    """
    family = AttackKind(kind).family if kind not in ("pgd", "cw") else kind
    z = ag.value_of(logits)
    k = z.shape[-1]
    if z.ndim != 1 or k < 2:
        raise ModelError("attack_loss expects a logit vector of length >= 2")
    if not 0 <= int(y) < k:
        raise ModelError(f"label {y} out of range for {k} classes")
    if family == "pgd":
        return ag.neg(ag.softmax_cross_entropy(logits, int(y)))
    others = z.copy()
    others[int(y)] = -np.inf
    runner_up = int(np.argmax(others))
    select = np.zeros(k)
    select[int(y)] = 1.0
    select[runner_up] = -1.0
    margin = ag.sum(ag.mul(logits, select))
    return ag.maximum(margin, -float(kappa))


def project(delta: np.ndarray, norm: str, radius: float) -> np.ndarray:
    """Project onto the L-inf (``"inf"``) or L2 (``"l2"``) ball of ``radius``."""
    delta = ag.as_array(delta)
    if norm == "inf":
        return np.clip(delta, -radius, radius)
    if norm == "l2":
        n = float(np.linalg.norm(delta))
        return delta * (radius / n) if n > radius else delta
    raise ValueError(f"unknown norm {norm!r}")


def _ball(config: AttackConfig) -> tuple[str, float] | None:
    if config.adaptive and not config.keep_ball:
        return None
    if config.kind is AttackKind.PGD:
        return "inf", config.eps_inf
    if config.kind in (AttackKind.PGD_L2, AttackKind.CW_L2):
        return "l2", config.eps_2
    return None


# ---------------------------------------------------------------------------
# the shared loop


def _check_inputs(model: Model, x, y) -> np.ndarray:
    x = ag.as_array(x)
    if x.ndim != 1 or x.size != model.input_length:
        raise ModelError(f"model expects length {model.input_length}, got series of shape {x.shape}")
    if not 0 <= int(y) < model.num_classes:
        raise ModelError(f"label {y} out of range")
    return x


def _initial_delta(x: np.ndarray, config: AttackConfig) -> np.ndarray:
    if not config.random_start:
        return np.zeros_like(x)
    rng = np.random.default_rng(config.seed)
    ball = _ball(config)
    radius = ball[1] if ball else config.alpha
    delta = rng.uniform(-radius, radius, size=x.shape)
    return project(delta, *ball) if ball else delta


def _finish(model, x, y, delta, best, steps, trace, config, sigma, adaptive,
            diagnostic=None) -> AttackOutcome:
    chosen = best if best is not None else delta
    success = int(np.argmax(predict(model, x + chosen))) != int(y)
    return AttackOutcome(
        success=success,
        delta=chosen,
        iterations_used=steps,
        l2_distance=float(np.linalg.norm(chosen)),
        close_to_zero=close_to_zero_count(chosen, config.epsilon_zero),
        trace=trace,
        final_sigma=sigma if adaptive else None,
        diagnostic=diagnostic,
    )


def _descend(model: Model, x, y: int, config: AttackConfig, adaptive: bool) -> AttackOutcome:
    x = _check_inputs(model, x, y)
    y = int(y)
    reg = config.regularizer
    family = config.kind.family
    ball = _ball(config)
    lo, hi = config.clamp_range if config.clamp_range else (None, None)

    delta = _initial_delta(x, config)
    sigma = config.sigma0
    ctrl = None
    if adaptive:
        ctrl = SigmaController(config.sigma0, config.eta_d, config.eta_i, sigma_min=config.sigma_floor)
    trace: list[TraceEntry] = []
    best, best_norm = None, math.inf
    prev_loss = None
    stable = 0
    steps = 0

    for t in range(config.iterations):
        tape = Tape()
        dv = tape.leaf(delta)
        logits = model.forward(ag.add(x, dv))
        loss = attack_loss(family, logits, y, config.kappa)
        pen = penalty(reg.kind, dv, sigma)
        total = ag.add(loss, ag.mul(reg.lam, pen))

        j_val, l_val = total.item(), loss.item()
        p_val = pen.item() if isinstance(pen, ag.Node) else float(pen)
        if not (math.isfinite(j_val) and np.all(np.isfinite(logits.value))):
            return _finish(model, x, y, delta, best, steps, trace, config, sigma, adaptive,
                           diagnostic=f"non-finite objective at iteration {t}")
        success = int(np.argmax(logits.value)) != y
        progressed = success or (prev_loss is not None and l_val < prev_loss)
        prev_loss = l_val
        if adaptive and t == 0:
            ctrl = replace(ctrl, j_star=j_val)
        trace.append(TraceEntry(t, j_val, l_val, p_val, sigma, progressed, success,
                                ctrl.j_star if adaptive else None))

        if success:
            norm = float(np.linalg.norm(delta))
            if norm < best_norm:
                best, best_norm = delta.copy(), norm
            if config.early_stop:
                break

        grad = tape.backward(total)[dv]
        if not np.all(np.isfinite(grad)):
            return _finish(model, x, y, delta, best, steps, trace, config, sigma, adaptive,
                           diagnostic=f"non-finite gradient at iteration {t}")
        if adaptive:
            ctrl = sigma_update(ctrl, progressed, j_val)
            sigma = ctrl.sigma

        if family == "pgd":
            new = delta - config.alpha * np.sign(grad)
        else:
            new = delta - config.alpha * grad
        if ball is not None:
            new = project(new, *ball)
        if lo is not None:
            new = np.clip(x + new, lo, hi) - x
        steps += 1

        moved = float(np.max(np.abs(new - delta)))
        delta = new
        stable = stable + 1 if moved < CONVERGENCE_TOL else 0
        if stable >= CONVERGENCE_PATIENCE:
            break

    # the iterate produced by the last step has not been scored yet
    if not (config.early_stop and best is not None):
        logits = predict(model, x + delta)
        if int(np.argmax(logits)) != y:
            norm = float(np.linalg.norm(delta))
            if norm < best_norm:
                best, best_norm = delta.copy(), norm
    return _finish(model, x, y, delta, best, steps, trace, config, sigma, adaptive)


def run_pgd(model: Model, x, y: int, config: AttackConfig) -> AttackOutcome:
    """Sign-gradient descent on J, projected onto the configured ball each step."""
    if config.kind.family != "pgd":
        raise AttackConfigError(f"run_pgd cannot run a {config.kind.value} config")
    return _descend(model, x, y, config, adaptive=False)


def run_cw(model: Model, x, y: int, config: AttackConfig) -> AttackOutcome:
    """Gradient descent on the floored margin plus penalty.

    Returns the smallest-L2 successful iterate, or the final iterate when no
    iterate succeeded.
    """
    if config.kind.family != "cw":
        raise AttackConfigError(f"run_cw cannot run a {config.kind.value} config")
    return _descend(model, x, y, config, adaptive=False)


def run_as(model: Model, x, y: int, config: AttackConfig) -> AttackOutcome:
    """PGD or CW with the smooth L0 penalty and sigma adapted after every iteration.

    Sigma shrinks by ``eta_d`` when the iterate made progress (misclassified,
    or lower attack loss than the previous iterate) and the objective is below
    its starting value; otherwise it grows by ``eta_i``.
    """
    if not config.adaptive:
        raise AttackConfigError("run_as requires the asl0 regularizer")
    return _descend(model, x, y, config, adaptive=True)


def run_attack(model: Model, x, y: int, config: AttackConfig) -> AttackOutcome:
    if config.adaptive:
        return run_as(model, x, y, config)
    if config.kind.family == "pgd":
        return run_pgd(model, x, y, config)
    return run_cw(model, x, y, config)
