"""Online control of the KL weight beta, the gamma schedule and the training phases.

Every ``update_period`` epochs after warm-up, beta moves by

    beta <- beta - b/4 (1 - sgn d_reg)(1 + sgn d_rec + dL)
                 + a/4 (1 - sgn d_rec)(1 + sgn d_reg - dL)

with ``d_rec = L_rec - w1 * min(L_rec history)``,
``d_reg = L_reg - w2 * min(L_reg history)`` and
``dL = sgn(L_rec - w3 * L_rec') + sgn(L_rec - w4 * L_rec')``, where
``L_rec'`` is the reconstruction loss at the last epoch beta changed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import ConfigError, StateError

CHANGE_TOL = 1e-12


def sgn(x: float) -> int:
    x = float(x)
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class ControllerHyper:
    a: float = 0.2
    b: float = 0.05
    w1: float = 1.2
    w2: float = 1.2
    w3: float = 0.9
    w4: float = 1.1
    update_period: int = 5
    warmup_epochs: int = 25
    stall_limit: int = 500
    beta_floor: float = 0.0

    def validate(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ConfigError("gains a and b must be positive")
        if self.w1 < 1 or self.w2 < 1:
            raise ConfigError("w1 and w2 must be >= 1")
        if not 0 < self.w3 < 1 < self.w4:
            raise ConfigError("need 0 < w3 < 1 < w4")
        if self.update_period < 1 or self.warmup_epochs < 0 or self.stall_limit < 1:
            raise ConfigError("update_period and stall_limit must be >= 1, warmup_epochs >= 0")
        if self.beta_floor < 0:
            raise ConfigError("beta_floor must be non-negative")


@dataclass(frozen=True)
class ControllerState:
    beta: float = 0.0
    min_rec: float | None = None
    min_reg: float | None = None
    rec_at_last_change: float | None = None
    last_change_epoch: int = 0
    epochs_since_change: int = 0
    epoch: int = 0
    last_rec: float | None = None

    @property
    def has_history(self) -> bool:
        return self.min_rec is not None


@dataclass(frozen=True)
class Deltas:
    rec: float
    reg: float
    dl_rec: int


def compute_deltas(state: ControllerState, l_rec: float, l_reg: float, hyper: ControllerHyper) -> Deltas:
    if not state.has_history:
        raise StateError("no post-warm-up loss history recorded yet")
    d_rec = l_rec - hyper.w1 * state.min_rec
    d_reg = l_reg - hyper.w2 * state.min_reg
    ref = state.rec_at_last_change
    dl = sgn(l_rec - hyper.w3 * ref) + sgn(l_rec - hyper.w4 * ref)
    return Deltas(d_rec, d_reg, dl)


def beta_increment(deltas: Deltas, hyper: ControllerHyper) -> float:
    p_rec, p_reg, dl = sgn(deltas.rec), sgn(deltas.reg), deltas.dl_rec
    down = hyper.b / 4 * (1 - p_reg) * (1 + p_rec + dl)
    up = hyper.a / 4 * (1 - p_rec) * (1 + p_reg - dl)
    return up - down


def _record_minima(state: ControllerState, l_rec: float, l_reg: float) -> ControllerState:
    return replace(
        state,
        min_rec=l_rec if state.min_rec is None else min(state.min_rec, l_rec),
        min_reg=l_reg if state.min_reg is None else min(state.min_reg, l_reg),
        last_rec=l_rec,
    )


def update_beta(
    state: ControllerState, l_rec: float, l_reg: float, hyper: ControllerHyper, deltas: Deltas | None = None
) -> ControllerState:
    """Apply one beta decision at ``state.epoch``; minima absorb the losses afterwards."""
    if deltas is None:
        deltas = compute_deltas(state, l_rec, l_reg, hyper)
    beta = max(hyper.beta_floor, state.beta + beta_increment(deltas, hyper))
    if abs(beta - state.beta) > CHANGE_TOL:
        state = replace(
            state,
            beta=beta,
            last_change_epoch=state.epoch,
            rec_at_last_change=l_rec,
            epochs_since_change=0,
        )
    else:
        state = replace(state, beta=beta)
    return _record_minima(state, l_rec, l_reg)


def stall_shakeup(state: ControllerState, hyper: ControllerHyper) -> ControllerState:
    """Kick beta up by ``a`` after ``stall_limit`` epochs without a change."""
    if state.epochs_since_change < hyper.stall_limit:
        return state
    return replace(
        state,
        beta=state.beta + hyper.a,
        epochs_since_change=0,
        last_change_epoch=state.epoch,
        rec_at_last_change=state.last_rec if state.last_rec is not None else state.rec_at_last_change,
    )


def gamma_schedule(
    epoch: int,
    phase_start_epoch: int | None,
    low: float = 0.01,
    high: float = 0.2,
    period: int = 100,
    shape: str = "sawtooth",
) -> float:
    """Cyclic clustering-loss weight; 0 before ``phase_start_epoch`` or when it is None.

    ``sawtooth`` ramps linearly from ``low`` to ``high`` over each period and
    resets; ``triangle`` ramps up over half a period and back down.
    """
    if phase_start_epoch is None or epoch < phase_start_epoch:
        return 0.0
    pos = (epoch - phase_start_epoch) % period
    if shape == "sawtooth":
        frac = pos / (period - 1) if period > 1 else 1.0
    elif shape == "triangle":
        half = period / 2
        frac = pos / half if pos <= half else (period - pos) / half
    else:
        raise ConfigError(f"unknown gamma cycle shape {shape!r}")
    return low + (high - low) * frac


class Phase(str, enum.Enum):
    WARMUP = "Warmup"
    REGULARIZED = "Regularized"
    SEMI_SUPERVISED = "SemiSupervised"


def phase(epoch: int, warmup_epochs: int = 25, semi_start: int | None = None) -> Phase:
    """Training phase at ``epoch``; ``semi_start`` is None for unsupervised runs."""
    if epoch < warmup_epochs:
        return Phase.WARMUP
    if semi_start is not None and epoch >= semi_start:
        return Phase.SEMI_SUPERVISED
    return Phase.REGULARIZED


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    beta: float
    gamma: float
    l_rec: float
    l_reg: float
    l_cls: float
    deltas: Deltas | None
    phase: Phase


TRACE_HEADER = "epoch,beta,gamma,L_rec,L_reg,L_cls,delta_rec,delta_reg,dL_rec,phase"


class BetaController:
    """Epoch-level driver: call :meth:`end_epoch` once per epoch with its mean losses.

    ``beta`` is the value to train the next epoch with.  With
    ``adaptive=False`` beta is held at ``fixed_beta`` after warm-up.
    """

    def __init__(self, hyper: ControllerHyper | None = None, adaptive: bool = True, fixed_beta: float = 1.0):
        self.hyper = hyper or ControllerHyper()
        self.hyper.validate()
        self.adaptive = adaptive
        self.fixed_beta = fixed_beta
        self.state = ControllerState(beta=0.0)

    @property
    def beta(self) -> float:
        return self.state.beta

    def end_epoch(self, epoch: int, l_rec: float, l_reg: float) -> Deltas | None:
        h = self.hyper
        if not (math.isfinite(l_rec) and math.isfinite(l_reg)):
            raise ConfigError("controller received non-finite losses")
        st = replace(self.state, epoch=epoch)
        deltas = None
        if epoch + 1 < h.warmup_epochs:
            pass
        elif not self.adaptive:
            st = replace(st, beta=self.fixed_beta)
        elif not st.has_history:
            # first post-warm-up epoch: seed the memory, no decision yet
            if epoch >= h.warmup_epochs:
                st = replace(st, rec_at_last_change=l_rec, last_change_epoch=epoch)
                st = _record_minima(st, l_rec, l_reg)
        else:
            st = replace(st, epochs_since_change=st.epochs_since_change + 1)
            if (epoch - h.warmup_epochs) % h.update_period == 0:
                deltas = compute_deltas(st, l_rec, l_reg, h)
                st = update_beta(st, l_rec, l_reg, h, deltas)
            else:
                st = _record_minima(st, l_rec, l_reg)
            st = stall_shakeup(st, h)
        self.state = st
        return deltas
