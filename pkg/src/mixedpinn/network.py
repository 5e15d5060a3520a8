"""One tanh MLP per output field, optional hard Dirichlet transforms, checkpoints."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Jet

FIELDS = ("u_x", "u_y", "sxx", "syy", "sxy", "T", "qx", "qy")
MECHANICAL = FIELDS[:5]
THERMAL = FIELDS[5:]

CHECKPOINT_MAGIC = "# mixedpinn checkpoint v1"


@dataclass(frozen=True)
class MlpSpec:
    n_inputs: int = 2
    hidden_layers: int = 5
    neurons: int = 40
    activation: str = "tanh"

    def __post_init__(self):
        if self.hidden_layers < 1 or self.neurons < 1:
            raise ValueError("need at least one hidden layer with one neuron")
        if self.n_inputs not in (2, 4):
            raise ValueError("n_inputs must be 2 (x, y) or 4 (x, y, E, k)")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def shapes(self) -> list[tuple]:
        widths = [self.n_inputs] + [self.neurons] * self.hidden_layers + [1]
        out = []
        for a, b in zip(widths[:-1], widths[1:]):
            out += [(a, b), (b,)]
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())


def init_params(spec: MlpSpec, rng_seed: int) -> list[np.ndarray]:
    """Glorot-uniform weights and zero biases, reproducible from ``rng_seed``."""
    rng = np.random.default_rng(rng_seed)
    params = []
    for shape in spec.shapes():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params.append(rng.uniform(-limit, limit, size=shape))
        else:
            params.append(np.zeros(shape))
    return params


def mlp_forward(params: list, X: Jet) -> Jet:
    """Evaluate an MLP on an input jet (slots, N, n_in); returns a (slots, N) jet."""
    h = X
    nlayers = len(params) // 2
    for i in range(nlayers):
        h = ad.linear(h, params[2 * i], params[2 * i + 1])
        if i < nlayers - 1:
            h = ad.tanh(h)
    return h[:, 0]


class FieldNetworkBundle:
    """Eight independent networks sharing one flat, canonically ordered parameter vector.

    The order is ``FIELDS``, then layer by layer, weight before bias, each array
    row-major.  ``theta`` is the single storage; per-network arrays are views.
    """

    def __init__(self, spec: MlpSpec | dict, hard_bc: bool = False, seed: int = 0,
                 dtype=np.float64):
        if isinstance(spec, MlpSpec):
            spec = {f: spec for f in FIELDS}
        self.specs = {f: spec[f] for f in FIELDS}
        self.hard_bc = hard_bc
        self._layout = {}
        pos = 0
        for f in FIELDS:
            entries = []
            for shape in self.specs[f].shapes():
                n = int(np.prod(shape))
                entries.append((pos, shape))
                pos += n
            self._layout[f] = entries
        self.theta = np.zeros(pos, dtype=dtype)
        for i, f in enumerate(FIELDS):
            for arr, p in zip(self.arrays(f), init_params(self.specs[f], seed * 1000 + i)):
                arr[...] = p

    @property
    def n_inputs(self) -> int:
        return self.specs[FIELDS[0]].n_inputs

    @property
    def size(self) -> int:
        return self.theta.size

    def arrays(self, field: str) -> list[np.ndarray]:
        return [self.theta[p:p + int(np.prod(s))].reshape(s) for p, s in self._layout[field]]

    def field_slice(self, field: str) -> slice:
        entries = self._layout[field]
        start = entries[0][0]
        last_pos, last_shape = entries[-1]
        return slice(start, last_pos + int(np.prod(last_shape)))

    def index_of(self, fields) -> np.ndarray:
        """Flat indices of all parameters belonging to ``fields``."""
        return np.concatenate([np.arange(self.size)[self.field_slice(f)] for f in fields])

    def copy(self) -> "FieldNetworkBundle":
        other = object.__new__(FieldNetworkBundle)
        other.specs = dict(self.specs)
        other.hard_bc = self.hard_bc
        other._layout = self._layout
        other.theta = self.theta.copy()
        return other

    # -- evaluation --------------------------------------------------------
    def param_jets(self, field: str, trainable: bool) -> list[Jet]:
        arrs = self.arrays(field)
        if trainable:
            return [Jet.leaf(a) for a in arrs]
        return [Jet(a[None]) for a in arrs]

    def forward(self, X: Jet, fields=FIELDS, trainable=(), leaves: dict | None = None) -> dict:
        """Evaluate ``fields`` on the input jet ``X``.

        Parameters of fields listed in ``trainable`` become tape leaves; they are
        stored into ``leaves`` (if given) so the caller can request gradients.
        """
        if X.shape[-1] != self.n_inputs:
            raise ValueError(f"networks expect {self.n_inputs} inputs, got {X.shape[-1]}")
        out = {}
        for f in fields:
            params = self.param_jets(f, f in trainable)
            if leaves is not None and f in trainable:
                leaves[f] = params
            out[f] = mlp_forward(params, X)
        if self.hard_bc:
            out = apply_hard_bc(out, X)
        return out

    def evaluate(self, points: np.ndarray, extra: np.ndarray | None = None, fields=FIELDS) -> dict:
        """Plain field values at ``points`` (no tangents, no tape)."""
        X = ad.seed_inputs(np.asarray(points, dtype=self.theta.dtype), 0, extra)
        return {f: j.numpy().copy() for f, j in self.forward(X, fields).items()}

    # -- checkpoints -------------------------------------------------------
    def save(self, path) -> None:
        """Plain-text checkpoint: one ``field layer kind row col value`` line per entry."""
        lines = [CHECKPOINT_MAGIC, f"# hard_bc {int(self.hard_bc)}"]
        for f in FIELDS:
            s = self.specs[f]
            lines.append(f"# spec {f} {s.n_inputs} {s.hidden_layers} {s.neurons} {s.activation}")
        for f in FIELDS:
            for k, arr in enumerate(self.arrays(f)):
                layer, kind = k // 2, "W" if k % 2 == 0 else "b"
                a2 = arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr[:, None]
                for r in range(a2.shape[0]):
                    for c in range(a2.shape[1]):
                        lines.append(f"{f} {layer} {kind} {r} {c} {float(a2[r, c])!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "FieldNetworkBundle":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a mixedpinn checkpoint")
        specs, hard_bc, body = {}, False, []
        for line in lines[1:]:
            if line.startswith("# hard_bc"):
                hard_bc = bool(int(line.split()[2]))
            elif line.startswith("# spec"):
                _, _, f, nin, nl, nn, act = line.split()
                specs[f] = MlpSpec(int(nin), int(nl), int(nn), act)
            elif line.strip():
                body.append(line.split())
        bundle = cls(specs, hard_bc=hard_bc)
        arrays = {f: bundle.arrays(f) for f in FIELDS}
        for f, layer, kind, r, c, val in body:
            arr = arrays[f][2 * int(layer) + (kind == "b")]
            if arr.ndim == 2:
                arr[int(r), int(c)] = float(val)
            else:
                arr[int(r)] = float(val)
        return bundle


def apply_hard_bc(outputs: dict, X: Jet) -> dict:
    """Constrain u_x, u_y and T to the unit-square Dirichlet data exactly.

    u_x -> u_x x (x-1),  u_y -> u_y y (y-1),  T -> T x (x-1) + 1 - x.
    Tangent slots follow from jet arithmetic.
    """
    x = Jet(X.data[..., 0])
    y = Jet(X.data[..., 1])
    gx = x * (x - 1.0)
    gy = y * (y - 1.0)
    out = dict(outputs)
    if "u_x" in out:
        out["u_x"] = out["u_x"] * gx
    if "u_y" in out:
        out["u_y"] = out["u_y"] * gy
    if "T" in out:
        out["T"] = out["T"] * gx + (1.0 - x)
    return out
