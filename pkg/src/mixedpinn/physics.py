"""Constitutive kernels and loss terms for stationary plane-strain thermoelasticity.

Loss functions consume a dict of field jets evaluated on every point of a
:class:`~mixedpinn.domain.CollocationSet` (stacked interior then edges) and
return a dict of scalar jets keyed by term name, so the same code serves
both reporting and parameter gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import autodiff as ad
from .autodiff import Jet
from .domain import EDGE_GROUPS, CollocationSet, MaterialSample

MECH_TERMS = ("EF_M", "DBC_M", "cnc_M", "SF_M", "NBC_M")
THERM_TERMS = ("EF_T", "DBC_T", "cnc_T", "SF_T", "NBC_T")
ALL_TERMS = MECH_TERMS + THERM_TERMS + ("data",)

# outward unit normals of the unit-square edges
NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "top": (0.0, 1.0), "bottom": (0.0, -1.0)}


# -- small reductions ------------------------------------------------------

def mse(values) -> float | Jet:
    """Mean of squares; accepts arrays or jets."""
    if isinstance(values, Jet):
        if values.data[0].size == 0:
            raise ValueError("mse of an empty set")
        return (values ** 2).mean()
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("mse of an empty set")
    return float(np.mean(v * v))


def mae(values) -> float | Jet:
    """Mean of absolute values; accepts arrays or jets."""
    if isinstance(values, Jet):
        if values.data[0].size == 0:
            raise ValueError("mae of an empty set")
        return ad.absolute(values).mean()
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("mae of an empty set")
    return float(np.mean(np.abs(v)))


def _zero() -> Jet:
    return Jet.constant(0.0)


# -- constitutive kernels --------------------------------------------------

def plane_strain_stress(E, nu, eex, eey, eexy):
    """Plane-strain Hooke's law on elastic strains (tensorial shear ``eexy``).

    Works on arrays and on jets alike.
    """
    c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    sxx = c * (1.0 - nu) * eex + c * nu * eey
    syy = c * nu * eex + c * (1.0 - nu) * eey
    # 2 mu * eexy, i.e. (1 - 2 nu)/2 * c applied to the engineering shear 2 eexy
    sxy = (E / (1.0 + nu)) * eexy
    return sxx, syy, sxy


def fourier_flux(k, dTdx, dTdy):
    return -1.0 * k * dTdx, -1.0 * k * dTdy


@dataclass
class StrainState:
    eps_x: object
    eps_y: object
    eps_xy: object
    eps_t: object

    @property
    def eps_e_x(self):
        return self.eps_x - self.eps_t

    @property
    def eps_e_y(self):
        return self.eps_y - self.eps_t

    @property
    def eps_e_xy(self):
        return self.eps_xy


@dataclass
class StressState:
    sxx: object
    syy: object
    sxy: object


@dataclass
class HeatState:
    gradT_x: object
    gradT_y: object
    qx: object
    qy: object


def derived_fields(out: dict, mat: MaterialSample):
    """Strain and stress from the displacements, heat flux from the temperature.

    Jets of order n give derived quantities of order n - 1; the temperature
    entering the thermal strain is truncated to match.  Either group may be
    absent from ``out`` (then the matching result is ``None``).
    """
    strain = stress = heat = None
    if "u_x" in out and "u_y" in out:
        ux, uy = out["u_x"], out["u_y"]
        order = ux.order - 1
        ex = ux.diff("x")
        ey = uy.diff("y")
        exy = 0.5 * (ux.diff("y") + uy.diff("x"))
        if "T" in out:
            T = out["T"]
            T = T.truncate(min(order, T.order)) if T.order > order else T
            et = mat.alpha * (T - mat.T0)
        else:
            et = Jet.constant(np.zeros(ux.shape))
        strain = StrainState(ex, ey, exy, et)
        stress = StressState(*plane_strain_stress(mat.E, mat.nu, strain.eps_e_x,
                                                  strain.eps_e_y, strain.eps_e_xy))
    if "T" in out and out["T"].order >= 1:
        T = out["T"]
        gx, gy = T.diff("x"), T.diff("y")
        heat = HeatState(gx, gy, *fourier_flux(mat.k, gx, gy))
    return strain, stress, heat


def strain_energy_density(stress: StressState, strain: StrainState):
    """Full contraction sigma : eps_e (shear counted twice, tensorial convention)."""
    return (stress.sxx * strain.eps_e_x + stress.syy * strain.eps_e_y
            + 2.0 * stress.sxy * strain.eps_e_xy)


# -- boundary-value problem ------------------------------------------------

@dataclass
class BoundaryConditions:
    """Edge data of the unit-square problem.

    Args:
        displacement: edge -> {component: value} Dirichlet data for u.
        traction: edge -> {component: value} prescribed traction components
            (sigma . n); edges/components not listed are not penalised.
        temperature: edge -> Dirichlet temperature.
        flux: edge -> prescribed normal heat flux q . n.
    """

    displacement: dict = field(default_factory=lambda: {
        "left": {"u_x": 0.0}, "right": {"u_x": 0.0}, "top": {"u_y": 0.0}, "bottom": {"u_y": 0.0}})
    traction: dict = field(default_factory=dict)
    temperature: dict = field(default_factory=lambda: {"left": 1.0, "right": 0.0})
    flux: dict = field(default_factory=lambda: {"top": 0.0, "bottom": 0.0})


@dataclass
class PhysicsOptions:
    """Knobs of the loss assembly.

    Args:
        thermal_energy: ``"energy"`` uses |mean(q . grad T)/2 - external work|;
            ``"boundary"`` adds the left-edge sum of q_x T instead.
        reduction: ``"group"`` averages each point group separately;
            ``"global"`` divides every pointwise sum by the total point count,
            so a group's weight grows with its number of points.
        energy: include the energy terms at all.
        one_way_coupling: treat the temperature as a fixed load inside the
            mechanical terms, so their gradients never reach the thermal
            networks.  Heat conduction does not depend on the deformation,
            and without this the coupled optimiser lowers the elastic energy
            by distorting T.
    """

    thermal_energy: str = "energy"
    reduction: str = "group"
    energy: bool = True
    one_way_coupling: bool = True

    def __post_init__(self):
        if self.thermal_energy not in ("energy", "boundary"):
            raise ValueError(f"thermal_energy must be 'energy' or 'boundary', got {self.thermal_energy!r}")
        if self.reduction not in ("group", "global"):
            raise ValueError(f"reduction must be 'group' or 'global', got {self.reduction!r}")


class _Reducer:
    def __init__(self, coll: CollocationSet, options: PhysicsOptions):
        if coll.count("interior") == 0:
            raise ValueError("collocation set has no interior points")
        self.coll = coll
        self.global_ = options.reduction == "global"
        self.n_all = len(coll)

    def msq(self, residual: Jet, group: str) -> Jet:
        n = self.coll.count(group)
        if n == 0:
            raise ValueError(f"point group {group!r} is empty")
        s = (residual ** 2).sum()
        return s * (1.0 / (self.n_all if self.global_ else n))


def _group(j: Jet, coll: CollocationSet, name: str) -> Jet:
    return j[coll.slices[name]]


# -- mixed formulation -----------------------------------------------------

def loss_mechanical(out: dict, coll: CollocationSet, bc: BoundaryConditions | None = None,
                    options: PhysicsOptions | None = None, hard_bc: bool = False) -> dict:
    """Mechanical terms of the mixed formulation.

    ``out`` needs first-order jets for u_x, u_y, sxx, syy, sxy and at least the
    value of T on every collocation point.
    """
    bc = bc or BoundaryConditions()
    options = options or PhysicsOptions()
    red = _Reducer(coll, options)
    inner = coll.slices["interior"]
    mat = coll.material.take(inner)
    sub = {f: out[f][inner] for f in ("u_x", "u_y", "sxx", "syy", "sxy", "T") if f in out}
    if options.one_way_coupling and "T" in sub:
        sub["T"] = sub["T"].detach()
    strain, stress, _ = derived_fields({k: v for k, v in sub.items() if k in ("u_x", "u_y", "T")}, mat)
    terms = {}

    if options.energy:
        energy = strain_energy_density(stress, strain).mean() * 0.5
        work = _zero()
        for edge, comps in bc.traction.items():
            for comp, value in comps.items():
                if value != 0.0:
                    disp = "u_x" if _traction_key(comp) == "t_x" else "u_y"
                    work = work + (_group(out[disp], coll, edge).value * value).mean()
        terms["EF_M"] = ad.absolute(-1.0 * energy + work)
    else:
        terms["EF_M"] = _zero()

    if hard_bc:
        terms["DBC_M"] = _zero()
    else:
        dbc = _zero()
        for edge, comps in bc.displacement.items():
            for comp, value in comps.items():
                dbc = dbc + red.msq(_group(out[comp], coll, edge).value - value, edge)
        terms["DBC_M"] = dbc

    so = {c: sub[c] for c in ("sxx", "syy", "sxy")}
    terms["cnc_M"] = (red.msq(so["sxx"].value - stress.sxx, "interior")
                      + red.msq(so["syy"].value - stress.syy, "interior")
                      + red.msq(so["sxy"].value - stress.sxy, "interior"))
    terms["SF_M"] = (red.msq(so["sxx"].dx + so["sxy"].dy, "interior")
                     + red.msq(so["sxy"].dx + so["syy"].dy, "interior"))

    nbc = _zero()
    for edge, comps in bc.traction.items():
        nx, ny = NORMALS[edge]
        sxx, syy, sxy = (_group(out[c], coll, edge).value for c in ("sxx", "syy", "sxy"))
        trac = {"t_x": sxx * nx + sxy * ny, "t_y": sxy * nx + syy * ny}
        for comp, value in comps.items():
            nbc = nbc + red.msq(trac[_traction_key(comp)] - value, edge)
    terms["NBC_M"] = nbc
    return terms


def _traction_key(comp: str) -> str:
    aliases = {"t_x": "t_x", "tx": "t_x", "u_x": "t_x", "t_y": "t_y", "ty": "t_y", "u_y": "t_y"}
    if comp not in aliases:
        raise ValueError(f"unknown traction component {comp!r}")
    return aliases[comp]


def loss_thermal(out: dict, coll: CollocationSet, bc: BoundaryConditions | None = None,
                 options: PhysicsOptions | None = None, hard_bc: bool = False) -> dict:
    """Thermal terms of the mixed formulation (first-order jets of T, qx, qy)."""
    bc = bc or BoundaryConditions()
    options = options or PhysicsOptions()
    red = _Reducer(coll, options)
    inner = coll.slices["interior"]
    mat = coll.material.take(inner)
    T = out["T"]
    qxo, qyo = out["qx"][inner], out["qy"][inner]
    _, _, heat = derived_fields({"T": T[inner]}, mat)
    terms = {}

    if options.energy:
        inner_term = (heat.qx * heat.gradT_x + heat.qy * heat.gradT_y).mean() * 0.5
        if options.thermal_energy == "boundary":
            # q_x T summed over the left edge
            left = coll.slices["left"]
            kl = coll.material.k[left]
            Tl = T[left]
            inner_term = inner_term + (-1.0 * kl * Tl.dx * Tl.value).mean()
        for edge, qbar in bc.flux.items():
            if qbar != 0.0:
                inner_term = inner_term - (_group(T, coll, edge).value * qbar).mean()
        terms["EF_T"] = ad.absolute(inner_term)
    else:
        terms["EF_T"] = _zero()

    if hard_bc:
        terms["DBC_T"] = _zero()
    else:
        dbc = _zero()
        for edge, value in bc.temperature.items():
            dbc = dbc + red.msq(_group(T, coll, edge).value - value, edge)
        terms["DBC_T"] = dbc

    terms["cnc_T"] = red.msq(qxo.value - heat.qx, "interior") + red.msq(qyo.value - heat.qy, "interior")
    terms["SF_T"] = red.msq(qxo.dx + qyo.dy, "interior")

    nbc = _zero()
    for edge, qbar in bc.flux.items():
        nx, ny = NORMALS[edge]
        qn = _group(out["qx"], coll, edge).value * nx + _group(out["qy"], coll, edge).value * ny
        nbc = nbc + red.msq(qn - qbar, edge)
    terms["NBC_T"] = nbc
    return terms


# -- baselines -------------------------------------------------------------

def loss_standard_pinn(out: dict, coll: CollocationSet, bc: BoundaryConditions | None = None,
                       options: PhysicsOptions | None = None, hard_bc: bool = False,
                       parts=("M", "T")) -> dict:
    """Strong-form residuals from second derivatives of u and T only.

    Material properties enter pointwise, so their jumps across interfaces are
    invisible to the residual.
    """
    bc = bc or BoundaryConditions()
    options = options or PhysicsOptions()
    red = _Reducer(coll, options)
    for f in ("u_x", "u_y", "T"):
        if f in out and out[f].order < 2:
            raise ValueError("the standard formulation needs second-order jets")
    terms = {t: _zero() for t in MECH_TERMS + THERM_TERMS}
    mat = coll.material
    mech = dict(out)
    if options.one_way_coupling and "T" in mech:
        mech["T"] = mech["T"].detach()
    strain, stress, _ = derived_fields(mech, mat)
    _, _, heat = derived_fields({"T": out["T"]} if "T" in out else {}, mat)

    if "M" in parts:
        div_x = stress.sxx.diff("x") + stress.sxy.diff("y")
        div_y = stress.sxy.diff("x") + stress.syy.diff("y")
        inner = coll.slices["interior"]
        terms["SF_M"] = red.msq(div_x[inner].value, "interior") + red.msq(div_y[inner].value, "interior")
        if not hard_bc:
            dbc = _zero()
            for edge, comps in bc.displacement.items():
                for comp, value in comps.items():
                    dbc = dbc + red.msq(_group(out[comp], coll, edge).value - value, edge)
            terms["DBC_M"] = dbc
        nbc = _zero()
        for edge in EDGE_GROUPS:
            nx, ny = NORMALS[edge]
            s = {c: _group(getattr(stress, c), coll, edge).value for c in ("sxx", "syy", "sxy")}
            trac = {"t_x": s["sxx"] * nx + s["sxy"] * ny, "t_y": s["sxy"] * nx + s["syy"] * ny}
            fixed = {"t_x" if c == "u_x" else "t_y" for c in bc.displacement.get(edge, {})}
            given = {_traction_key(c): v for c, v in bc.traction.get(edge, {}).items()}
            for comp in ("t_x", "t_y"):
                if comp in fixed:
                    continue
                nbc = nbc + red.msq(trac[comp] - given.get(comp, 0.0), edge)
        terms["NBC_M"] = nbc

    if "T" in parts:
        inner = coll.slices["interior"]
        div_q = heat.qx.diff("x") + heat.qy.diff("y")
        terms["SF_T"] = red.msq(div_q[inner].value, "interior")
        if not hard_bc:
            dbc = _zero()
            for edge, value in bc.temperature.items():
                dbc = dbc + red.msq(_group(out["T"], coll, edge).value - value, edge)
            terms["DBC_T"] = dbc
        nbc = _zero()
        for edge, qbar in bc.flux.items():
            nx, ny = NORMALS[edge]
            qn = _group(heat.qx, coll, edge).value * nx + _group(heat.qy, coll, edge).value * ny
            nbc = nbc + red.msq(qn - qbar, edge)
        terms["NBC_T"] = nbc
    return terms


def loss_dem(out: dict, coll: CollocationSet, bc: BoundaryConditions | None = None,
             options: PhysicsOptions | None = None, hard_bc: bool = False,
             parts=("M", "T")) -> dict:
    """Energy functional plus Dirichlet penalties (first-order jets of u and T)."""
    bc = bc or BoundaryConditions()
    options = options or PhysicsOptions()
    red = _Reducer(coll, options)
    inner = coll.slices["interior"]
    mat = coll.material.take(inner)
    sub = {f: out[f][inner] for f in ("u_x", "u_y", "T") if f in out}
    terms = {t: _zero() for t in MECH_TERMS + THERM_TERMS}

    if "M" in parts:
        msub = dict(sub)
        if options.one_way_coupling and "T" in msub:
            msub["T"] = msub["T"].detach()
        strain, stress, _ = derived_fields(msub, mat)
        work = _zero()
        for edge, comps in bc.traction.items():
            for comp, value in comps.items():
                if value != 0.0:
                    disp = "u_x" if _traction_key(comp) == "t_x" else "u_y"
                    work = work + (_group(out[disp], coll, edge).value * value).mean()
        terms["EF_M"] = strain_energy_density(stress, strain).mean() * 0.5 - work
        if not hard_bc:
            dbc = _zero()
            for edge, comps in bc.displacement.items():
                for comp, value in comps.items():
                    dbc = dbc + red.msq(_group(out[comp], coll, edge).value - value, edge)
            terms["DBC_M"] = dbc

    if "T" in parts:
        _, _, heat = derived_fields({"T": sub["T"]}, mat)
        ef = (heat.qx * heat.gradT_x + heat.qy * heat.gradT_y).mean() * -0.5
        for edge, qbar in bc.flux.items():
            if qbar != 0.0:
                ef = ef + (_group(out["T"], coll, edge).value * qbar).mean()
        terms["EF_T"] = ef
        if not hard_bc:
            dbc = _zero()
            for edge, value in bc.temperature.items():
                dbc = dbc + red.msq(_group(out["T"], coll, edge).value - value, edge)
            terms["DBC_T"] = dbc
    return terms


def loss_data(out: dict, reference: dict, fields=None) -> Jet:
    """Sum over fields of the mean-square mismatch against reference values.

    Args:
        out: field jets (any order) on the reference points.
        reference: field -> array of reference values, one per point.
    """
    fields = tuple(reference) if fields is None else tuple(fields)
    total = _zero()
    for f in fields:
        ref = np.asarray(reference[f], dtype=float)
        pred = out[f].value if out[f].order > 0 else out[f]
        if pred.shape != ref.shape:
            raise ValueError(f"data loss: {f} has {pred.shape} predictions but {ref.shape} references")
        total = total + mse(pred - ref)
    return total


def combine_data_physics(data, physics, w: float):
    """L_total = data + w * physics."""
    if w < 0:
        raise ValueError("physics weight must be non-negative")
    if w == 0:
        return data
    return data + physics * w


# -- reporting -------------------------------------------------------------

@dataclass
class LossBreakdown:
    EF_M: float = 0.0
    DBC_M: float = 0.0
    cnc_M: float = 0.0
    SF_M: float = 0.0
    NBC_M: float = 0.0
    EF_T: float = 0.0
    DBC_T: float = 0.0
    cnc_T: float = 0.0
    SF_T: float = 0.0
    NBC_T: float = 0.0
    data: float = 0.0
    w: float = 1.0

    @property
    def L_M(self) -> float:
        return self.EF_M + self.DBC_M + self.cnc_M + self.SF_M + self.NBC_M

    @property
    def L_T(self) -> float:
        return self.EF_T + self.DBC_T + self.cnc_T + self.SF_T + self.NBC_T

    @property
    def L_total(self) -> float:
        return self.data + self.w * (self.L_M + self.L_T)

    @classmethod
    def from_terms(cls, terms: dict, w: float = 1.0) -> "LossBreakdown":
        vals = {k: float(np.asarray(v.data if isinstance(v, Jet) else v).reshape(-1)[0])
                for k, v in terms.items()}
        return cls(**vals, w=w)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dc_fields(self) if f.name != "w"}
        d.update(L_M=self.L_M, L_T=self.L_T, L_total=self.L_total)
        return d


def sum_terms(terms: dict, names=None) -> Jet:
    total = _zero()
    for k in (terms if names is None else names):
        if k in terms:
            total = total + terms[k]
    return total
