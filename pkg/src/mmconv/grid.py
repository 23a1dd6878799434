"""Uniform grids and real-valued grid fields.

Both point sets live on the same lattice ``x = k h``:

* ``"sp"`` (sine-pseudospectral interior): ``k = -M/2 + 1, ..., M/2 - 1``
* ``"fs"`` (Fourier cells): ``k = -M/2, ..., M/2 - 1``

with ``M = N`` on the base domain ``[-L, L]^d`` and ``M = S N`` on the expanded
domain ``[-S L, S L]^d``.  The ``fs`` set is the ``sp`` set plus the lower
boundary point ``-M h / 2``, so converting between them is index bookkeeping.
Arrays are C-ordered with axis 0 = x, axis 1 = y, axis 2 = z.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

LAYOUTS = ("sp", "fs")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    N: int
    S: int = 1

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 4 and self.N % 2 == 0):
            raise GridError(f"N must be an even integer >= 4, got {self.N}")
        if not (isinstance(self.S, (int, np.integer)) and self.S >= 1):
            raise GridError(f"S must be a positive integer, got {self.S}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")

    @property
    def h(self):
        return 2.0 * self.L / self.N

    @property
    def M(self):
        """Points per axis on the expanded domain."""
        return self.S * self.N

    @property
    def SL(self):
        return self.S * self.L

    def with_S(self, S):
        return Grid(self.d, self.L, self.N, S)

    def npoints(self, layout, expanded=False):
        n = self.M if expanded else self.N
        if layout == "sp":
            return n - 1
        if layout == "fs":
            return n
        raise GridError(f"unknown layout {layout!r}")

    def shape(self, layout, expanded=False):
        return (self.npoints(layout, expanded),) * self.d

    def indices(self, layout, expanded=False):
        """Lattice indices k (x = k h) along one axis."""
        n = self.M if expanded else self.N
        lo = -n // 2 + (1 if layout == "sp" else 0)
        if layout not in LAYOUTS:
            raise GridError(f"unknown layout {layout!r}")
        return np.arange(lo, n // 2)

    def axis(self, layout, expanded=False):
        return self.indices(layout, expanded) * self.h

    def mesh(self, layout, expanded=False, sparse=True):
        ax = self.axis(layout, expanded)
        return np.meshgrid(*([ax] * self.d), indexing="ij", sparse=sparse)

    def base_slice(self, layout):
        """Slice of an expanded-grid axis that covers the base grid."""
        off = (self.M - self.N) // 2
        return slice(off, off + self.npoints(layout))


def make_grid(d, L, N, S=1):
    return Grid(int(d), float(L), int(N), int(S))


@dataclass(frozen=True)
class FieldSamples:
    grid: Grid
    layout: str
    values: np.ndarray = field(repr=False)
    expanded: bool = False

    def __post_init__(self):
        want = self.grid.shape(self.layout, self.expanded)
        vals = np.asarray(self.values)
        if vals.shape != want:
            raise GridError(f"field shape {vals.shape} does not match {self.layout} layout {want}")
        if np.iscomplexobj(vals):
            raise GridError("FieldSamples hold real values")
        vals = np.array(vals, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def coords(self, sparse=True):
        return self.grid.mesh(self.layout, self.expanded, sparse=sparse)

    def __add__(self, other):
        _check_same(self, other)
        return FieldSamples(self.grid, self.layout, self.values + other.values, self.expanded)

    def __sub__(self, other):
        _check_same(self, other)
        return FieldSamples(self.grid, self.layout, self.values - other.values, self.expanded)

    def __mul__(self, a):
        return FieldSamples(self.grid, self.layout, self.values * a, self.expanded)

    __rmul__ = __mul__


def _check_same(a, b):
    if a.grid != b.grid or a.layout != b.layout or a.expanded != b.expanded:
        raise GridError("fields live on different grids or layouts")


def sample(grid, layout, fn, expanded=False):
    """Sample ``fn(*coords)`` (broadcasting over open meshes) on a layout."""
    vals = np.broadcast_to(fn(*grid.mesh(layout, expanded)), grid.shape(layout, expanded))
    return FieldSamples(grid, layout, np.array(vals, dtype=float), expanded)


def to_layout(f, layout):
    """Convert between layouts; ``sp -> fs`` fills the boundary point with 0."""
    if layout == f.layout:
        return f
    d = f.grid.d
    if f.layout == "fs" and layout == "sp":
        return FieldSamples(f.grid, "sp", f.values[(slice(1, None),) * d], f.expanded)
    if f.layout == "sp" and layout == "fs":
        return FieldSamples(f.grid, "fs", np.pad(f.values, [(1, 0)] * d), f.expanded)
    raise GridError(f"unknown layout {layout!r}")


def restrict(f):
    """Restrict an expanded-grid field to the base grid (same layout)."""
    if not f.expanded:
        return f
    sl = f.grid.base_slice(f.layout)
    return FieldSamples(f.grid, f.layout, f.values[(sl,) * f.grid.d], expanded=False)


def extend(f):
    """Zero-extend a base-grid field onto the expanded grid (same layout)."""
    if f.expanded:
        return f
    g = f.grid
    out = np.zeros(g.shape(f.layout, expanded=True))
    sl = g.base_slice(f.layout)
    out[(sl,) * g.d] = f.values
    return FieldSamples(g, f.layout, out, expanded=True)


# Field dump: little-endian header then C-ordered float64 values.
#   4s  magic  b"MMFD"
#   I   version (1)
#   I   d
#   I   N
#   I   S
#   d   L
#   B   layout (0 = sp, 1 = fs)
#   B   expanded (0/1)
#   2x  padding            (header = 32 bytes)
_DUMP_HEADER = struct.Struct("<4sIIIIdBB2x")
_DUMP_MAGIC = b"MMFD"


def write_field(path, f):
    g = f.grid
    head = _DUMP_HEADER.pack(_DUMP_MAGIC, 1, g.d, g.N, g.S, g.L,
                             LAYOUTS.index(f.layout), int(f.expanded))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DUMP_HEADER.size:
        raise GridError(f"{path}: truncated header")
    magic, version, d, N, S, L, lay, exp = _DUMP_HEADER.unpack_from(raw)
    if magic != _DUMP_MAGIC or version != 1:
        raise GridError(f"{path}: not a field dump")
    grid = make_grid(d, L, N, S)
    layout = LAYOUTS[lay]
    shape = grid.shape(layout, bool(exp))
    data = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    if data.size != int(np.prod(shape)):
        raise GridError(f"{path}: expected {int(np.prod(shape))} values, found {data.size}")
    return FieldSamples(grid, layout, data.reshape(shape).astype(float), bool(exp))


def write_field_csv(path, f):
    """Text variant: a ``# d=.. L=.. N=.. S=.. layout=.. expanded=..`` line, then
    one ``i,j[,k],x,y[,z],value`` row per sample."""
    g = f.grid
    idx = g.indices(f.layout, f.expanded)
    grids = np.meshgrid(*([idx] * g.d), indexing="ij")
    cols = [a.ravel() for a in grids] + [a.ravel() * g.h for a in grids] + [f.values.ravel()]
    names = ["i", "j", "k"][: g.d] + ["x", "y", "z"][: g.d] + ["value"]
    with open(path, "w") as fh:
        fh.write(f"# d={g.d} L={g.L!r} N={g.N} S={g.S} layout={f.layout} expanded={int(f.expanded)}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join([str(int(v)) for v in row[: g.d]] + [repr(float(v)) for v in row[g.d:]]) + "\n")
