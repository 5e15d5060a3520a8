"""Loss-and-gradient callables over a subset of a bundle's parameters."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .. import physics as ph
from ..domain import CollocationSet
from ..network import FIELDS, MECHANICAL, THERMAL, FieldNetworkBundle

FORMULATIONS = ("mixed", "standard", "dem")

_PRIMARY = {"M": ("u_x", "u_y"), "T": ("T",)}


def required_fields(formulation: str, parts) -> tuple:
    if formulation == "mixed":
        need = set()
        if "M" in parts:
            need |= set(MECHANICAL) | {"T"}
        if "T" in parts:
            need |= set(THERMAL)
    else:
        need = {"T"} | ({"u_x", "u_y"} if "M" in parts else set())
    return tuple(f for f in FIELDS if f in need)


def default_trainable(formulation: str, parts) -> tuple:
    """Fields whose networks receive updates when minimising ``parts``."""
    if formulation == "mixed":
        own = set()
        if "M" in parts:
            own |= set(MECHANICAL)
        if "T" in parts:
            own |= set(THERMAL)
    else:
        own = set()
        for p in parts:
            own |= set(_PRIMARY[p])
    return tuple(f for f in FIELDS if f in own)


class Objective:
    """Scalar training loss as a function of the trainable slice of ``bundle.theta``.

    Args:
        formulation: ``"mixed"``, ``"standard"`` or ``"dem"``.
        parts: which physics to include, a subset of ``("M", "T")``.
        trainable: fields whose parameters are optimised; the remaining
            required fields are evaluated once and cached as constants.
        reference: optional field -> values on the interior points for the
            data term; the total becomes ``data + w * physics``.
        w: physics weight used with ``reference``.  ``w == 0`` skips the
            physics terms and evaluates value-only jets.
    """

    def __init__(self, bundle: FieldNetworkBundle, coll: CollocationSet, formulation: str = "mixed",
                 parts=("M", "T"), trainable=None, bc: ph.BoundaryConditions | None = None,
                 options: ph.PhysicsOptions | None = None, reference: dict | None = None,
                 w: float = 1.0):
        if formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {formulation!r}")
        self.bundle = bundle
        self.coll = coll
        self.formulation = formulation
        self.parts = tuple(parts)
        self.bc = bc or ph.BoundaryConditions()
        self.options = options or ph.PhysicsOptions()
        self.reference = reference
        self.w = float(w)
        if self.w < 0:
            raise ValueError("physics weight must be non-negative")
        self.physics = reference is None or self.w > 0
        if self.physics:
            self.fields = required_fields(formulation, self.parts)
        else:
            self.fields = tuple(f for f in FIELDS if f in reference)
        if trainable is None:
            trainable = default_trainable(formulation, self.parts) if self.physics else self.fields
        self.trainable = tuple(f for f in FIELDS if f in trainable)
        self.frozen = tuple(f for f in self.fields if f not in self.trainable)
        self.index = bundle.index_of(self.trainable) if self.trainable else np.zeros(0, dtype=int)
        self.order = 2 if (formulation == "standard" and self.physics) else (1 if self.physics else 0)
        self.base_coll = coll
        self._seed_inputs(coll)
        self._stale = False
        # temperature held fixed inside the mechanical terms between begin_step calls
        self.load_T: ad.Jet | None = None
        self.split_load = (self.physics and self.options.one_way_coupling
                           and "M" in self.parts and "T" in self.trainable)
        self.last_terms: dict | None = None
        self.n_evals = 0

    def _seed_inputs(self, coll: CollocationSet) -> None:
        self.coll = coll
        self.extra = None
        if self.bundle.n_inputs == 4:
            m = coll.material
            self.extra = np.column_stack([m.E, m.k]).astype(self.bundle.theta.dtype)
        points = coll.points.astype(self.bundle.theta.dtype)
        if not self.physics:
            sl = coll.slices["interior"]
            points = points[sl]
            self.extra = None if self.extra is None else self.extra[sl]
        self.X = ad.seed_inputs(points, self.order, self.extra)
        self._cache = None
        self._cache_key = None

    def resample(self, rng: np.random.Generator) -> None:
        """Jitter the interior grid of the original collocation set (see CollocationSet.jittered).

        A fixed point set lets a flexible network lower the point-sampled
        energy with steep transitions between the points; moving the points
        every step removes that degenerate minimum.
        """
        if self.reference is not None:
            raise ValueError("reference data lives on the original points; cannot resample")
        self._seed_inputs(self.base_coll.jittered(rng))
        self.load_T = None
        self._stale = True

    @property
    def size(self) -> int:
        return self.index.size

    def get(self) -> np.ndarray:
        return self.bundle.theta[self.index].copy()

    def set(self, theta_sub: np.ndarray) -> None:
        self.bundle.theta[self.index] = theta_sub

    # -- evaluation -------------------------------------------------------
    def _frozen_outputs(self) -> dict:
        if not self.frozen:
            return {}
        key = self.bundle.theta[self.bundle.index_of(self.frozen)]
        if self._cache is None or not np.array_equal(key, self._cache_key):
            outs = self.bundle.forward(self.X, self.frozen)
            self._cache = {f: ad.Jet(j.data.copy()) for f, j in outs.items()}
            self._cache_key = key.copy()
        return self._cache

    def begin_step(self, theta_sub: np.ndarray) -> bool:
        """Fix the temperature load seen by the mechanical terms at ``theta_sub``.

        With one-way coupling the mechanical gradient ignores T, which is only
        a true gradient when T is held constant.  Between two calls the
        objective is therefore L_T(live T) + L_M(T fixed here), a smooth
        function whose gradient is consistent, as line searches require.
        Returns True when the load or the points changed (cached gradients are stale).
        """
        stale, self._stale = self._stale, False
        if not self.split_load:
            return stale
        self.set(theta_sub)
        T = self.bundle.forward(self.X, ("T",))["T"]
        self.load_T = ad.Jet(T.data.copy())
        return True

    def release_load(self) -> None:
        self.load_T = None

    def _terms(self, out: dict, live: bool = False) -> dict:
        hard = self.bundle.hard_bc
        terms = {}
        if self.physics:
            out_m = out
            if self.load_T is not None and not live and "M" in self.parts:
                out_m = dict(out)
                out_m["T"] = self.load_T
            if self.formulation == "mixed":
                if "M" in self.parts:
                    terms.update(ph.loss_mechanical(out_m, self.coll, self.bc, self.options, hard))
                if "T" in self.parts:
                    terms.update(ph.loss_thermal(out, self.coll, self.bc, self.options, hard))
            else:
                fn = ph.loss_standard_pinn if self.formulation == "standard" else ph.loss_dem
                if "M" in self.parts:
                    terms.update(_only(fn(out_m, self.coll, self.bc, self.options, hard, ("M",)), ("M",)))
                if "T" in self.parts:
                    terms.update(_only(fn(out, self.coll, self.bc, self.options, hard, ("T",)), ("T",)))
        if self.reference is not None:
            if self.physics:
                sl = self.coll.slices["interior"]
                inner = {f: out[f][sl] for f in self.reference}
            else:
                inner = out
            terms["data"] = ph.loss_data(inner, self.reference)
        return terms

    def _total(self, terms: dict):
        physics = ph.sum_terms(terms, ph.MECH_TERMS + ph.THERM_TERMS)
        if self.reference is None:
            return physics
        return ph.combine_data_physics(terms["data"], physics, self.w)

    def __call__(self, theta_sub: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Loss value and gradient with respect to the trainable slice."""
        if theta_sub is not None:
            self.set(theta_sub)
        self.n_evals += 1
        frozen = self._frozen_outputs()
        with ad.Tape() as tape:
            leaves: dict = {}
            out = self.bundle.forward(self.X, self.trainable, trainable=self.trainable, leaves=leaves)
            out.update(frozen)
            terms = self._terms(out)
            loss = self._total(terms)
            params = [p for f in self.trainable for p in leaves[f]]
            g = ad.grad_params(loss, params, tape)
        self.last_terms = terms
        return float(loss.data.reshape(-1)[0]), g

    def value(self, theta_sub: np.ndarray | None = None) -> float:
        """Loss at ``theta_sub`` (or the current parameters) with the live temperature."""
        if theta_sub is not None:
            self.set(theta_sub)
        out = self.bundle.forward(self.X, self.fields)
        terms = self._terms(out, live=True)
        self.last_terms = terms
        return float(self._total(terms).data.reshape(-1)[0])

    def breakdown(self) -> ph.LossBreakdown:
        """Named terms of the most recent evaluation."""
        if self.last_terms is None:
            self.value()
        w = self.w if self.reference is not None else 1.0
        return ph.LossBreakdown.from_terms(self.last_terms, w)


def _only(terms: dict, parts) -> dict:
    keep = ()
    if "M" in parts:
        keep += ph.MECH_TERMS
    if "T" in parts:
        keep += ph.THERM_TERMS
    return {k: v for k, v in terms.items() if k in keep}
