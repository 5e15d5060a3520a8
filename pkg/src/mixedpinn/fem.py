"""Bilinear-quad finite elements for the reference thermoelastic solution.

Steady heat conduction is solved first; its temperature then loads a
plane-strain elastic solve through the thermal pre-strain (one-way coupling).
Nodes are numbered ``j * (nx + 1) + i`` with x varying fastest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .domain import Geometry, MaterialField, material_at

OUTPUT_FIELDS = ("T", "u_x", "u_y", "sxx", "syy", "sxy", "qx", "qy")
UNITS = {"x": "mm", "y": "mm", "T": "K", "u_x": "mm", "u_y": "mm", "sxx": "GPa",
         "syy": "GPa", "sxy": "GPa", "qx": "kW/m^2", "qy": "kW/m^2"}

_G = 1.0 / np.sqrt(3.0)
GAUSS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
# reference corner coordinates, counter-clockwise from (-1, -1)
_CORNERS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


class SingularSystemError(RuntimeError):
    """Raised when a reduced system cannot be factorised."""


def shape_functions(xi: float, eta: float):
    """Bilinear shape functions and their reference derivatives at (xi, eta)."""
    N = 0.25 * (1 + _CORNERS[:, 0] * xi) * (1 + _CORNERS[:, 1] * eta)
    dxi = 0.25 * _CORNERS[:, 0] * (1 + _CORNERS[:, 1] * eta)
    deta = 0.25 * _CORNERS[:, 1] * (1 + _CORNERS[:, 0] * xi)
    return N, dxi, deta


@dataclass
class QuadMesh:
    """Structured nx x ny mesh of 4-node quadrilaterals on the unit square.

    Args:
        sampling: ``"centroid"`` evaluates material once per element,
            ``"gauss"`` at each of the 2 x 2 quadrature points.
    """

    nx: int
    ny: int
    geometry: Geometry
    material: MaterialField
    sampling: str = "centroid"
    _mat: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("mesh needs at least one element per direction")
        if self.sampling not in ("centroid", "gauss"):
            raise ValueError(f"unknown material sampling {self.sampling!r}")
        self.hx, self.hy = 1.0 / self.nx, 1.0 / self.ny
        self.xs = np.linspace(0.0, 1.0, self.nx + 1)
        self.ys = np.linspace(0.0, 1.0, self.ny + 1)
        X, Y = np.meshgrid(self.xs, self.ys)
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        n0 = j * (self.nx + 1) + i
        self.conn = np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])
        self.centroids = self.nodes[self.conn].mean(axis=1)
        self._mat = self._sample_material()

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    def gauss_points(self) -> np.ndarray:
        """Physical Gauss point coordinates, shape (n_elements, 4, 2)."""
        c = self.centroids[:, None, :]
        half = np.array([self.hx, self.hy]) / 2
        return c + GAUSS[None, :, :] * half

    def _sample_material(self) -> dict:
        if self.sampling == "centroid":
            pts = np.repeat(self.centroids[:, None, :], 4, axis=1)
        else:
            pts = self.gauss_points()
        s = material_at(self.geometry, self.material, pts[..., 0], pts[..., 1])
        return {"E": s.E, "nu": s.nu, "k": s.k, "alpha": s.alpha}

    def element_material(self, name: str) -> np.ndarray:
        """Per-element, per-Gauss-point property array of shape (n_elements, 4)."""
        return self._mat[name]

    def boundary_nodes(self, edge: str) -> np.ndarray:
        nx1 = self.nx + 1
        idx = np.arange(self.n_nodes)
        i, j = idx % nx1, idx // nx1
        mask = {"left": i == 0, "right": i == self.nx, "bottom": j == 0, "top": j == self.ny}[edge]
        return idx[mask]

    def gradient_operators(self):
        """Physical shape-function gradients at the Gauss points and at the centre.

        Returns:
            (dN_gauss, dN_centre, weight): arrays (4, 2, 4) and (2, 4); weight
            is the Gauss weight times the Jacobian determinant.
        """
        jx, jy = 2.0 / self.hx, 2.0 / self.hy
        dN = []
        for xi, eta in GAUSS:
            _, dxi, deta = shape_functions(xi, eta)
            dN.append([dxi * jx, deta * jy])
        _, dxi, deta = shape_functions(0.0, 0.0)
        return np.array(dN), np.array([dxi * jx, deta * jy]), self.hx * self.hy / 4.0


# -- solvers ---------------------------------------------------------------

def _solve_reduced(K: sp.csr_matrix, f: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    n = K.shape[0]
    u = np.zeros(n)
    u[fixed] = values
    free = np.setdiff1d(np.arange(n), fixed)
    Kff = K[free][:, free].tocsc()
    rhs = f[free] - K[free][:, fixed] @ values
    try:
        lu = spla.splu(Kff)
    except RuntimeError as exc:  # pragma: no cover - defensive
        raise SingularSystemError(str(exc)) from exc
    u[free] = lu.solve(rhs)
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("non-finite solution")
    return u


def _assemble(conn_dofs: np.ndarray, Ke: np.ndarray, n: int) -> sp.csr_matrix:
    ne, m = conn_dofs.shape
    rows = np.repeat(conn_dofs, m, axis=1).ravel()
    cols = np.tile(conn_dofs, (1, m)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def conductivity_matrix(mesh: QuadMesh) -> sp.csr_matrix:
    dN, _, w = mesh.gradient_operators()
    k = mesh.element_material("k")
    # K_e = sum_g k_g dN_g^T dN_g w
    BtB = np.einsum("gda,gdb->gab", dN, dN)
    Ke = np.einsum("eg,gab->eab", k, BtB) * w
    return _assemble(mesh.conn, Ke, mesh.n_nodes)


def solve_thermal(mesh: QuadMesh, T_left: float = 1.0, T_right: float = 0.0):
    """Steady conduction with fixed temperatures on x = 0 and x = 1, insulated elsewhere.

    Returns:
        (T, K): nodal temperatures and the conductivity matrix.
    """
    K = conductivity_matrix(mesh)
    left, right = mesh.boundary_nodes("left"), mesh.boundary_nodes("right")
    fixed = np.concatenate([left, right])
    values = np.concatenate([np.full(left.size, T_left), np.full(right.size, T_right)])
    T = _solve_reduced(K, np.zeros(mesh.n_nodes), fixed, values)
    return T, K


def elasticity_tensors(E: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Plane-strain Voigt matrices (engineering shear), shape E.shape + (3, 3)."""
    c = E / ((1 + nu) * (1 - 2 * nu))
    D = np.zeros(E.shape + (3, 3))
    D[..., 0, 0] = D[..., 1, 1] = c * (1 - nu)
    D[..., 0, 1] = D[..., 1, 0] = c * nu
    D[..., 2, 2] = c * (1 - 2 * nu) / 2
    return D


def _strain_operator(dN: np.ndarray) -> np.ndarray:
    """B matrix (3 x 8) from shape gradients (2, 4); dofs ordered (u_x, u_y) per node."""
    B = np.zeros(dN.shape[:-2] + (3, 8))
    B[..., 0, 0::2] = dN[..., 0, :]
    B[..., 1, 1::2] = dN[..., 1, :]
    B[..., 2, 0::2] = dN[..., 1, :]
    B[..., 2, 1::2] = dN[..., 0, :]
    return B


def solve_mechanical(mesh: QuadMesh, T: np.ndarray):
    """Plane-strain thermoelastic solve with u_x = 0 on x = 0, 1 and u_y = 0 on y = 0, 1.

    Returns:
        (u, K): displacement vector (u_x, u_y interleaved per node) and stiffness.
    """
    dN, _, w = mesh.gradient_operators()
    B = _strain_operator(dN)                                   # (4, 3, 8)
    D = elasticity_tensors(mesh.element_material("E"), mesh.element_material("nu"))  # (ne, 4, 3, 3)
    Ke = np.einsum("gia,egij,gjb->eab", B, D, B) * w
    dofs = np.empty((mesh.n_elements, 8), dtype=int)
    dofs[:, 0::2] = 2 * mesh.conn
    dofs[:, 1::2] = 2 * mesh.conn + 1
    n = 2 * mesh.n_nodes
    K = _assemble(dofs, Ke, n)

    Ng = np.array([shape_functions(xi, eta)[0] for xi, eta in GAUSS])   # (4 gp, 4 nodes)
    Tg = T[mesh.conn] @ Ng.T                                            # (ne, 4 gp)
    et = mesh.element_material("alpha") * (Tg - mesh.material.T0)
    eps_t = np.zeros(et.shape + (3,))
    eps_t[..., 0] = eps_t[..., 1] = et
    fe = np.einsum("gia,egij,egj->ea", B, D, eps_t) * w
    f = np.zeros(n)
    np.add.at(f, dofs, fe)

    fixed = np.concatenate([
        2 * mesh.boundary_nodes("left"), 2 * mesh.boundary_nodes("right"),
        2 * mesh.boundary_nodes("bottom") + 1, 2 * mesh.boundary_nodes("top") + 1,
    ])
    fixed = np.unique(fixed)
    u = _solve_reduced(K, f, fixed, np.zeros(fixed.size))
    return u, K


# -- solution container ----------------------------------------------------

@dataclass
class FemSolution:
    mesh: QuadMesh
    T: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray
    element: dict
    nodal: dict
    reactions: dict = field(default_factory=dict)

    def nodal_field(self, name: str) -> np.ndarray:
        if name == "T":
            return self.T
        if name in ("u_x", "u_y"):
            return getattr(self, name)
        return self.nodal[name]

    def interpolate(self, points: np.ndarray, fields=OUTPUT_FIELDS) -> dict:
        """Bilinear interpolation of nodal (or nodal-averaged) fields at ``points``."""
        pts = np.asarray(points, dtype=float)
        if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
            raise ValueError("interpolation point outside the unit square")
        pts = np.clip(pts, 0.0, 1.0)
        shape = (self.mesh.ny + 1, self.mesh.nx + 1)
        out = {}
        for f in fields:
            grid = self.nodal_field(f).reshape(shape)
            interp = RegularGridInterpolator((self.mesh.ys, self.mesh.xs), grid, method="linear")
            out[f] = interp(pts[:, ::-1])
        return out

    def heat_balance(self) -> tuple[float, float]:
        """Total heat entering at x = 0 and leaving at x = 1 (from nodal reactions)."""
        return self.reactions["left"], -self.reactions["right"]

    def write_csv(self, path, points: np.ndarray | None = None) -> None:
        pts = self.mesh.nodes if points is None else np.asarray(points)
        vals = self.interpolate(pts) if points is not None else {f: self.nodal_field(f) for f in OUTPUT_FIELDS}
        write_fields_csv(path, pts, vals)

    def write_vtk(self, path) -> None:
        write_vtk(path, self.mesh, {f: self.nodal_field(f) for f in OUTPUT_FIELDS})


def solve(geometry: Geometry, material: MaterialField, n: int, sampling: str = "centroid",
          ny: int | None = None) -> FemSolution:
    """Thermal then mechanical solve on an n x n (or n x ny) mesh."""
    mesh = QuadMesh(n, n if ny is None else ny, geometry, material, sampling)
    T, Kt = solve_thermal(mesh)
    u, _ = solve_mechanical(mesh, T)
    ux, uy = u[0::2], u[1::2]

    dN, dNc, _ = mesh.gradient_operators()
    Nc = shape_functions(0.0, 0.0)[0]
    Te = T[mesh.conn]                                   # (ne, 4)
    gradT = np.einsum("da,ea->ed", dNc, Te)
    kc = mesh.element_material("k").mean(axis=1)
    Bc = _strain_operator(dNc)
    ue = np.empty((mesh.n_elements, 8))
    ue[:, 0::2], ue[:, 1::2] = ux[mesh.conn], uy[mesh.conn]
    eps = ue @ Bc.T                                     # (ne, 3) engineering shear
    Ec, nuc = mesh.element_material("E").mean(axis=1), mesh.element_material("nu").mean(axis=1)
    ac = mesh.element_material("alpha").mean(axis=1)
    et = ac * (Te @ Nc - material.T0)
    eps_e = eps.copy()
    eps_e[:, :2] -= et[:, None]
    sig = np.einsum("eij,ej->ei", elasticity_tensors(Ec, nuc), eps_e)
    element = {"sxx": sig[:, 0], "syy": sig[:, 1], "sxy": sig[:, 2],
               "qx": -kc * gradT[:, 0], "qy": -kc * gradT[:, 1]}

    counts = np.bincount(mesh.conn.ravel(), minlength=mesh.n_nodes)
    nodal = {}
    for name, vals in element.items():
        acc = np.bincount(mesh.conn.ravel(), weights=np.repeat(vals, 4), minlength=mesh.n_nodes)
        nodal[name] = acc / counts

    r = Kt @ T
    reactions = {"left": float(r[mesh.boundary_nodes("left")].sum()),
                 "right": float(r[mesh.boundary_nodes("right")].sum())}
    return FemSolution(mesh, T, ux, uy, element, nodal, reactions)


# -- studies and metrics ---------------------------------------------------

def convergence_study(geometry: Geometry, material: MaterialField, sizes=(50, 100, 200),
                      fields=OUTPUT_FIELDS) -> list[dict]:
    """Differences between consecutive refinements, sampled on the finest mesh's nodes.

    Returns:
        One row per consecutive pair with ``{"coarse", "fine"}`` and, per field,
        the root-mean-square difference ``<field>`` and the max-norm difference
        ``<field>_max``.  From the second row on, ``<field>_ratio`` and
        ``<field>_max_ratio`` divide by the previous row.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("mesh sizes must be ascending")
    if len(sizes) < 2:
        return []
    sols = [solve(geometry, material, n) for n in sizes]
    target = sols[-1].mesh.nodes
    samples = [s.interpolate(target, fields) for s in sols]
    rows = []
    for a in range(len(sizes) - 1):
        row = {"coarse": sizes[a], "fine": sizes[a + 1]}
        for f in fields:
            d = samples[a + 1][f] - samples[a][f]
            row[f] = float(np.sqrt(np.mean(d * d)))
            row[f + "_max"] = float(np.max(np.abs(d)))
            if rows:
                for key in (f, f + "_max"):
                    prev = rows[-1][key]
                    row[key + "_ratio"] = row[key] / prev if prev > 0 else 0.0
        rows.append(row)
    return rows


def error_metrics(pred: dict, ref: dict, fields=None) -> dict:
    """Relative differences in percent of the reference's maximum magnitude.

    Returns:
        field -> {"avg_rel_pct", "max_rel_pct", "diff"} where ``diff`` is the
        pointwise difference pred - ref.
    """
    fields = [f for f in (fields or ref) if f in pred]
    out = {}
    for f in fields:
        p, r = np.asarray(pred[f], dtype=float), np.asarray(ref[f], dtype=float)
        if p.shape != r.shape:
            raise ValueError(f"{f}: prediction {p.shape} and reference {r.shape} differ")
        scale = np.max(np.abs(r))
        if scale == 0:
            raise ValueError(f"{f}: reference field is identically zero; relative error undefined")
        d = p - r
        out[f] = {"avg_rel_pct": 100.0 * float(np.mean(np.abs(d))) / scale,
                  "max_rel_pct": 100.0 * float(np.max(np.abs(d))) / scale,
                  "diff": d}
    return out


# -- export ----------------------------------------------------------------

def csv_header(names) -> str:
    return ",".join(f"{n} [{UNITS.get(n, '-')}]" for n in names)


def write_fields_csv(path, points: np.ndarray, values: dict) -> None:
    """CSV with unit-annotated header and round-trip-exact number formatting."""
    names = ["x", "y"] + list(values)
    data = np.column_stack([points[:, 0], points[:, 1]] + [np.asarray(values[f]) for f in values])
    with open(path, "w", newline="") as fh:
        fh.write(csv_header(names) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_fields_csv(path) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        header = fh.readline().strip()
    names = [h.split(" [")[0] for h in header.split(",")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if names[:2] != ["x", "y"]:
        raise ValueError(f"{path}: first columns must be x and y")
    return data[:, :2], {n: data[:, i] for i, n in enumerate(names) if i >= 2}


def write_vtk(path, mesh: QuadMesh, values: dict) -> None:
    """Legacy ASCII VTK structured-points file with one scalar per field."""
    lines = ["# vtk DataFile Version 3.0", "mixedpinn fields", "ASCII",
             "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
             "ORIGIN 0 0 0", f"SPACING {mesh.hx!r} {mesh.hy!r} 1",
             f"POINT_DATA {mesh.n_nodes}"]
    for name, vals in values.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in np.asarray(vals)]
    if "u_x" in values and "u_y" in values:
        lines.append("VECTORS displacement double")
        lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(values["u_x"], values["u_y"])]
    Path(path).write_text("\n".join(lines) + "\n")
