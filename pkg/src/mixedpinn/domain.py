"""Unit-square microstructures with their material fields, and collocation point sets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

EDGE_GROUPS = ("left", "right", "top", "bottom")
GROUPS = ("interior",) + EDGE_GROUPS

_TOL = 1e-12


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    def signed_distance(self, x, y):
        cx, cy = self.center
        return np.hypot(np.asarray(x) - cx, np.asarray(y) - cy) - self.radius

    def contains(self, x, y):
        # squared form keeps points such as (0.5, 0.75) exactly on the rim
        cx, cy = self.center
        d2 = (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2
        return d2 <= self.radius ** 2 + _TOL

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r), (cx + r, cy + r)


@dataclass(frozen=True)
class Rect:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if not (self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise ValueError(f"degenerate rectangle {self.lo} .. {self.hi}")

    def signed_distance(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        cx, cy = (self.lo[0] + self.hi[0]) / 2, (self.lo[1] + self.hi[1]) / 2
        hx, hy = (self.hi[0] - self.lo[0]) / 2, (self.hi[1] - self.lo[1]) / 2
        dx, dy = np.abs(x - cx) - hx, np.abs(y - cy) - hy
        outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
        return outside + np.minimum(np.maximum(dx, dy), 0)

    def contains(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        return ((x >= self.lo[0] - _TOL) & (x <= self.hi[0] + _TOL)
                & (y >= self.lo[1] - _TOL) & (y <= self.hi[1] + _TOL))

    def bounds(self):
        return self.lo, self.hi


def _overlap(a, b) -> bool:
    """True when the interiors of two shapes intersect (touching is allowed)."""
    if isinstance(a, Rect) and isinstance(b, Rect):
        return (min(a.hi[0], b.hi[0]) > max(a.lo[0], b.lo[0])
                and min(a.hi[1], b.hi[1]) > max(a.lo[1], b.lo[1]))
    if isinstance(a, Circle) and isinstance(b, Circle):
        d = np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
        return d < a.radius + b.radius
    circ, rect = (a, b) if isinstance(a, Circle) else (b, a)
    return float(rect.signed_distance(*circ.center)) < circ.radius


@dataclass(frozen=True)
class Geometry:
    """The unit square [0, 1]^2 (mm) with non-overlapping inclusions."""

    inclusions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        for s in self.inclusions:
            lo, hi = s.bounds()
            if min(lo) < -_TOL or max(hi) > 1 + _TOL:
                raise ValueError(f"inclusion {s} leaves the unit square")
        for i, a in enumerate(self.inclusions):
            for b in self.inclusions[i + 1:]:
                if _overlap(a, b):
                    raise ValueError(f"inclusions overlap: {a} and {b}")

    def indicator(self, x, y) -> np.ndarray:
        """Boolean inclusion membership; points on an inclusion boundary count as inside."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=bool)
        for s in self.inclusions:
            out |= s.contains(x, y)
        return out

    def smooth_indicator(self, x, y, width: float) -> np.ndarray:
        """Inclusion fraction blended linearly over a band of ``width`` around interfaces."""
        if width <= 0:
            return self.indicator(x, y).astype(float)
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        d = np.full(np.broadcast_shapes(x.shape, y.shape), np.inf)
        for s in self.inclusions:
            d = np.minimum(d, s.signed_distance(x, y))
        return np.clip(0.5 - d / width, 0.0, 1.0)


@dataclass(frozen=True)
class MaterialField:
    """Matrix and inclusion properties (E in GPa, k in W/mK, alpha in 1/K)."""

    E_mat: float
    E_inc: float
    k_mat: float
    k_inc: float
    nu_mat: float = 0.3
    nu_inc: float = 0.3
    alpha_mat: float = 1.0
    alpha_inc: float = 1.0
    T0: float = 0.0

    def __post_init__(self):
        for name in ("E_mat", "E_inc", "k_mat", "k_inc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nu_mat", "nu_inc"):
            if not 0 < getattr(self, name) < 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5)")

    @property
    def ratio(self) -> float:
        return self.E_mat / self.E_inc

    @classmethod
    def homogeneous(cls, E=1.0, nu=0.3, k=1.0, alpha=1.0, T0=0.0) -> "MaterialField":
        return cls(E, E, k, k, nu, nu, alpha, alpha, T0)

    def with_(self, **kw) -> "MaterialField":
        return replace(self, **kw)


@dataclass
class MaterialSample:
    """Per-point material arrays."""

    E: np.ndarray
    nu: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    T0: float = 0.0

    def take(self, sl) -> "MaterialSample":
        return MaterialSample(self.E[sl], self.nu[sl], self.k[sl], self.alpha[sl], self.T0)


def material_at(geometry: Geometry, material: MaterialField, x, y,
                smoothing: float = 0.0) -> MaterialSample:
    """Sample (E, nu, k, alpha) at points; inclusion values on or inside inclusion boundaries.

    Args:
        smoothing: band width of the optional linear blend across interfaces.
            Zero (default) gives sharp membership.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any((x < -_TOL) | (x > 1 + _TOL) | (y < -_TOL) | (y > 1 + _TOL)):
        raise ValueError("material_at: point outside the unit square")
    m = material
    if smoothing > 0:
        w = geometry.smooth_indicator(x, y, smoothing)

        def blend(a, b):
            return a + (b - a) * w
    else:
        inside = geometry.indicator(x, y)

        def blend(a, b):
            return np.where(inside, float(b), float(a))

    return MaterialSample(blend(m.E_mat, m.E_inc), blend(m.nu_mat, m.nu_inc),
                          blend(m.k_mat, m.k_inc), blend(m.alpha_mat, m.alpha_inc), m.T0)


# -- the two reference microstructures -------------------------------------

GEOMETRY2_SPANS = ((0.08, 0.28), (0.40, 0.60), (0.72, 0.92))


def build_geometry1(center=(0.5, 0.5), radius=0.25, **material) -> tuple[Geometry, MaterialField]:
    """Single circular inclusion, stiffer and more conductive than the matrix."""
    props = dict(E_mat=0.3, E_inc=1.0, k_mat=0.3, k_inc=1.0)
    props.update(material)
    return Geometry((Circle(tuple(center), radius),)), MaterialField(**props)


def build_geometry2(rectangles=None, **material) -> tuple[Geometry, MaterialField]:
    """A 3 x 3 array of square inclusions, softer and less conductive than the matrix."""
    if rectangles is None:
        rectangles = [Rect((x0, y0), (x1, y1))
                      for (y0, y1) in GEOMETRY2_SPANS for (x0, x1) in GEOMETRY2_SPANS]
    props = dict(E_mat=1.0, E_inc=0.5, k_mat=1.0, k_inc=0.5)
    props.update(material)
    return Geometry(tuple(rectangles)), MaterialField(**props)


# -- point sets -----------------------------------------------------------

@dataclass
class CollocationSet:
    """Interior and edge points stacked as [interior | left | right | top | bottom].

    Corner points belong to both of their edges.  ``material`` holds one sample
    per stacked point.
    """

    points: np.ndarray
    slices: dict
    material: MaterialSample
    geometry: Geometry | None = None
    material_field: MaterialField | None = None
    meta: dict = field(default_factory=dict)

    def group(self, name: str) -> np.ndarray:
        return self.points[self.slices[name]]

    def count(self, name: str) -> int:
        s = self.slices[name]
        return s.stop - s.start

    @property
    def counts(self) -> dict:
        return {g: self.count(g) for g in GROUPS}

    def __len__(self):
        return self.points.shape[0]

    def with_material(self, material: MaterialField, smoothing: float = 0.0) -> "CollocationSet":
        """Same points resampled for another material (used by parametric training)."""
        sample = material_at(self.geometry, material, self.points[:, 0], self.points[:, 1], smoothing)
        meta = dict(self.meta, smoothing=smoothing)
        return CollocationSet(self.points, self.slices, sample, self.geometry, material, meta)

    def jittered(self, rng: np.random.Generator, antithetic: bool = True) -> "CollocationSet":
        """Copy whose regular interior grid points are moved uniformly within their cells.

        Edge points and any extra interior points stay where they are; material
        samples are recomputed at the moved points.

        Args:
            rng: source of the offsets.
            antithetic: draw one offset per 2 x 2 block of cells and mirror it
                across the block's midlines, so the first-order sampling error
                of smooth integrands cancels; otherwise every cell gets an
                independent offset.
        """
        n = self.meta.get("n")
        if not n or self.geometry is None or self.material_field is None:
            raise ValueError("jitter needs a grid-sampled set with geometry and material")
        points = self.points.copy()
        start = self.slices["interior"].start
        if antithetic:
            # one offset per 2x2 block of cells, mirrored across the block's midlines
            m = (n + 1) // 2
            block = rng.uniform(-0.5 / n, 0.5 / n, size=(m, m, 2))
            i = np.arange(n)
            offset = block[i[:, None] // 2, i[None, :] // 2].copy()      # indexed [row j, column i]
            offset[:, :, 0] *= np.where(i % 2, -1.0, 1.0)[None, :]
            offset[:, :, 1] *= np.where(i % 2, -1.0, 1.0)[:, None]
            points[start:start + n * n] += offset.reshape(n * n, 2)
        else:
            points[start:start + n * n] += rng.uniform(-0.5 / n, 0.5 / n, size=(n * n, 2))
        sample = material_at(self.geometry, self.material_field, points[:, 0], points[:, 1],
                             self.meta.get("smoothing", 0.0))
        return CollocationSet(points, self.slices, sample, self.geometry, self.material_field,
                              dict(self.meta))

    @classmethod
    def from_groups(cls, groups: dict, geometry: Geometry, material: MaterialField,
                    smoothing: float = 0.0, meta: dict | None = None) -> "CollocationSet":
        slices, pos, arrays = {}, 0, []
        for g in GROUPS:
            pts = np.asarray(groups.get(g, np.zeros((0, 2))), dtype=float).reshape(-1, 2)
            slices[g] = slice(pos, pos + len(pts))
            pos += len(pts)
            arrays.append(pts)
        points = np.concatenate(arrays)
        sample = material_at(geometry, material, points[:, 0], points[:, 1], smoothing)
        return cls(points, slices, sample, geometry, material, meta or {})


def _edge(t: np.ndarray, name: str) -> np.ndarray:
    zeros, ones = np.zeros_like(t), np.ones_like(t)
    return {
        "left": np.column_stack([zeros, t]),
        "right": np.column_stack([ones, t]),
        "top": np.column_stack([t, ones]),
        "bottom": np.column_stack([t, zeros]),
    }[name]


def sample_collocation(geometry: Geometry, material: MaterialField, target_interior: int,
                       n_edge: int | None = None, refine: str = "none", extra: int = 0,
                       band: float = 0.02, smoothing: float = 0.0) -> CollocationSet:
    """Cell-centred n x n interior grid (n = round(sqrt(target))) plus uniform edge points.

    Args:
        target_interior: desired interior count; the actual count is n * n.
        n_edge: points per edge including both corners (defaults to n + 1).
        refine: ``"none"``, ``"left_edge"`` (left edge gets ``n_edge + extra``
            points) or ``"interface"`` (``extra`` grid points within ``band``
            of an inclusion boundary are added to the interior).
    """
    if target_interior < 4:
        raise ValueError("target_interior must be at least 4")
    if refine not in ("none", "left_edge", "interface"):
        raise ValueError(f"unknown refinement {refine!r}")
    n = int(round(np.sqrt(target_interior)))
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c)
    interior = np.column_stack([X.ravel(), Y.ravel()])
    n_edge = n + 1 if n_edge is None else int(n_edge)
    if n_edge < 2:
        raise ValueError("n_edge must be at least 2")
    t = np.linspace(0.0, 1.0, n_edge)
    groups = {g: _edge(t, g) for g in EDGE_GROUPS}
    groups["interior"] = interior
    if refine == "left_edge" and extra > 0:
        groups["left"] = _edge(np.linspace(0.0, 1.0, n_edge + extra), "left")
    elif refine == "interface" and extra > 0:
        groups["interior"] = np.concatenate([interior, _interface_points(geometry, extra, band)])
    meta = {"n": n, "n_edge": n_edge, "refine": refine, "extra": extra, "smoothing": smoothing}
    return CollocationSet.from_groups(groups, geometry, material, smoothing, meta)


def _interface_points(geometry: Geometry, extra: int, band: float) -> np.ndarray:
    """About ``extra`` points on a fine grid restricted to a band around interfaces."""
    if not geometry.inclusions:
        return np.zeros((0, 2))
    area = 0.0
    m = 64
    for _ in range(6):
        c = (np.arange(m) + 0.5) / m
        X, Y = np.meshgrid(c, c)
        d = np.full(X.shape, np.inf)
        for s in geometry.inclusions:
            d = np.minimum(d, np.abs(s.signed_distance(X, Y)))
        mask = d <= band
        area = mask.sum()
        if area >= extra:
            break
        m *= 2
    pts = np.column_stack([X[mask], Y[mask]])
    if len(pts) > extra:
        pts = pts[np.linspace(0, len(pts) - 1, extra).round().astype(int)]
    return pts


def evaluation_grid(n: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """Regular n x n grid covering [0, 1]^2 including edges.

    Returns:
        (coords, points): ``coords`` is the 1-D axis, ``points`` has shape
        (n*n, 2) with x varying fastest.
    """
    if n < 2:
        raise ValueError("evaluation grid needs n >= 2")
    c = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(c, c)
    return c, np.column_stack([X.ravel(), Y.ravel()])
