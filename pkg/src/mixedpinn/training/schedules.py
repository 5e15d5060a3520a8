"""Training schedules: coupled or sequential, plus parametric transfer over material ratios."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .. import physics as ph
from ..autodiff import DivergedLossError
from ..domain import CollocationSet, MaterialField
from ..network import FIELDS, MECHANICAL, THERMAL, FieldNetworkBundle
from .log import TrainLog
from .objective import Objective
from .optimizers import LBFGS, Adam, LineSearchStall


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss; ``log`` holds the records up to that point."""

    def __init__(self, message: str, log: TrainLog):
        super().__init__(message)
        self.log = log


@dataclass
class TrainConfig:
    """Optimiser and schedule settings.

    Args:
        optimizer: ``"adam"`` or ``"lbfgs"``.
        schedule: ``"coupled"`` or ``"sequential"``.
        n_A: total epochs (L-BFGS: iterations).
        n_T, n_M: epochs per thermal / mechanical phase in sequential mode.
            When ``n_A`` is not a whole number of blocks the last phase is
            cut short so the total is exactly ``n_A``.
        start: first sequential phase, ``"thermal"`` or ``"mechanical"``.
        loss_threshold: optional early stop; a phase (or a coupled run) ends
            as soon as its loss falls below this value.
        log_every: checkpoint period in epochs (0 disables checkpoints).
        jitter: move the interior grid points randomly within their cells
            before every step (all points are still used in every step).
    """

    optimizer: str = "adam"
    lr: float = 1e-3
    history: int = 50
    schedule: str = "coupled"
    n_A: int = 1000
    n_T: int = 0
    n_M: int = 0
    start: str = "thermal"
    seed: int = 0
    log_every: int = 0
    loss_threshold: float | None = None
    allow_sequential_lbfgs: bool = False
    jitter: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "lbfgs"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("coupled", "sequential"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.n_A < 0:
            raise ValueError("n_A must be non-negative")
        if self.schedule == "sequential":
            if self.n_T <= 0 or self.n_M <= 0:
                raise ValueError("sequential training needs n_T > 0 and n_M > 0")
            if self.start not in ("thermal", "mechanical"):
                raise ValueError("start must be 'thermal' or 'mechanical'")
            if self.optimizer == "lbfgs" and not self.allow_sequential_lbfgs:
                raise ValueError("sequential training with L-BFGS is disabled "
                                 "(set allow_sequential_lbfgs to override)")

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.lr)
        return LBFGS(self.history)


def sequential_plan(config: TrainConfig) -> list[tuple[str, int]]:
    """Phase list [(tag, epochs), ...] summing to exactly ``n_A``."""
    order = [("thermal", config.n_T), ("mechanical", config.n_M)]
    if config.start == "mechanical":
        order.reverse()
    plan, left, k = [], config.n_A, 0
    while left > 0:
        tag, n = order[k % 2]
        n = min(n, left)
        plan.append((tag, n))
        left -= n
        k += 1
    return plan


def _run_phase(obj: Objective, opt, epochs: int, log: TrainLog, phase: str, config: TrainConfig,
               checkpoint_dir: Path | None, callback: Callable | None) -> bool:
    """Minimise ``obj`` for ``epochs`` steps; returns False when the run must stop."""
    x = obj.get().astype(float)
    rng = np.random.default_rng([config.seed, log.next_epoch]) if config.jitter else None
    for _ in range(epochs):
        t0 = time.perf_counter()
        if rng is not None:
            obj.resample(rng)
        try:
            x_new, f = opt.step(obj, x)
        except (DivergedLossError, FloatingPointError) as exc:
            obj.set(x)
            log.status, log.message = "diverged", str(exc)
            raise TrainingDiverged(str(exc), log) from exc
        except LineSearchStall as exc:
            log.status, log.message = "stalled", str(exc)
            obj.set(x)
            return False
        x = x_new
        obj.set(x)
        if isinstance(opt, LBFGS):
            # the last line-search evaluation may be a rejected trial point
            obj.value()
        dt = time.perf_counter() - t0
        rec = log.append(phase, obj.breakdown(), dt)
        if checkpoint_dir is not None and config.log_every and (rec["epoch"] + 1) % config.log_every == 0:
            obj.bundle.save(checkpoint_dir / "checkpoint.txt")
        if callback is not None:
            callback(rec)
        if config.loss_threshold is not None and f < config.loss_threshold:
            break
        if getattr(opt, "converged", False):
            log.status, log.message = "converged", "optimizer tolerance reached"
            break
    return True


def train_coupled(bundle: FieldNetworkBundle, coll: CollocationSet, config: TrainConfig,
                  formulation: str = "mixed", bc: ph.BoundaryConditions | None = None,
                  options: ph.PhysicsOptions | None = None, log: TrainLog | None = None,
                  checkpoint_dir=None, callback: Callable | None = None,
                  parts=("M", "T")) -> TrainLog:
    """Minimise L_M + L_T over all networks at once for ``n_A`` epochs.

    Args:
        parts: physics to include; ``("T",)`` trains the thermal networks alone.
    """
    log = log if log is not None else TrainLog()
    obj = Objective(bundle, coll, formulation, parts, bc=bc, options=options)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    _run_phase(obj, config.make_optimizer(), config.n_A, log, "coupled", config, ckpt, callback)
    return log


def train_sequential(bundle: FieldNetworkBundle, coll: CollocationSet, config: TrainConfig,
                     formulation: str = "mixed", bc: ph.BoundaryConditions | None = None,
                     options: ph.PhysicsOptions | None = None, log: TrainLog | None = None,
                     checkpoint_dir=None, callback: Callable | None = None) -> TrainLog:
    """Alternate thermal and mechanical phases, freezing the inactive networks.

    Each field group keeps its own optimiser state across its phases.  In a
    mechanical phase the temperature network is evaluated once and cached.
    """
    if config.schedule != "sequential":
        raise ValueError("train_sequential needs schedule='sequential'")
    log = log if log is not None else TrainLog()
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    groups = {"thermal": ("T",), "mechanical": ("M",)}
    if formulation == "mixed":
        trainable = {"thermal": THERMAL, "mechanical": MECHANICAL}
    else:
        trainable = {"thermal": ("T",), "mechanical": ("u_x", "u_y")}
    optimizers = {tag: config.make_optimizer() for tag in groups}
    for tag, n in sequential_plan(config):
        obj = Objective(bundle, coll, formulation, groups[tag], trainable=trainable[tag],
                        bc=bc, options=options)
        if not _run_phase(obj, optimizers[tag], n, log, tag, config, ckpt, callback):
            break
    return log


def material_for_ratio(ratio: float, base: MaterialField) -> MaterialField:
    """Matrix properties kept, inclusion E and k divided by ``ratio`` (ratio = mat / inc)."""
    if ratio <= 0:
        raise ValueError("material ratio must be positive")
    return base.with_(E_inc=base.E_mat / ratio, k_inc=base.k_mat / ratio)


def train_parametric(bundle: FieldNetworkBundle, coll: CollocationSet, ratios, references: dict,
                     w: float, config: TrainConfig, base: MaterialField,
                     epochs_per_ratio: int | None = None, bc: ph.BoundaryConditions | None = None,
                     options: ph.PhysicsOptions | None = None, log: TrainLog | None = None,
                     callback: Callable | None = None) -> TrainLog:
    """Transfer learning over material ratios with loss data + w * (L_T + L_M).

    Args:
        bundle: networks with four inputs (x, y, E, k).
        references: ratio -> {field: values on the interior points}.
        epochs_per_ratio: epochs spent on each ratio (defaults to ``config.n_A``).
    """
    if bundle.n_inputs != 4:
        raise ValueError("parametric training needs networks with inputs (x, y, E, k)")
    if config.jitter:
        raise ValueError("parametric training fits data at fixed points; jitter must be off")
    missing = [r for r in ratios if r not in references]
    if missing:
        raise ValueError(f"no reference data for ratios {missing}")
    log = log if log is not None else TrainLog()
    n = config.n_A if epochs_per_ratio is None else epochs_per_ratio
    for r in ratios:
        coll_r = coll.with_material(material_for_ratio(r, base))
        obj = Objective(bundle, coll_r, "mixed", ("M", "T"), trainable=FIELDS, bc=bc,
                        options=options, reference=references[r], w=w)
        if not _run_phase(obj, config.make_optimizer(), n, log, f"ratio={r:g}", config, None, callback):
            break
    return log


def parameter_snapshot(bundle: FieldNetworkBundle, fields) -> np.ndarray:
    return bundle.theta[bundle.index_of(fields)].copy()
