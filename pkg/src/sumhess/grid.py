"""Uniform Cartesian grids on a rectangle with ghost-point Neumann closure.

Nodes sit at cell vertices, boundary included.  A field is a flat float array
over the nodes in C order of the index tuple ``(i, j[, l])``, so the last axis
varies fastest.

Ghost layer
-----------
The array is padded by one layer.  A ghost ``g`` that lies outside along the
axes in ``O`` is filled from its mirror image across those faces plus the
prescribed normal derivatives at the projection ``b`` of ``g`` onto the
boundary::

    u(g) = u(mirror_O(g)) + sum_{a in O} 2 h_a phi_a(b, u(b))

For a single face this is the usual centered closure
``(u_ghost - u_inner) / (2h) = phi``.  At corners the same rule fills the
diagonal ghosts used by the mixed-derivative stencil, and it is exact on
quadratics because the odd part of a quadratic about ``b`` is linear.

Boundary rows
-------------
The default discrete problem imposes the PDE at interior nodes and a one-sided
second-order Neumann relation ``(3u_b - 4u_{b-1} + u_{b-2}) / (2h) = phi`` at
boundary nodes, averaged over the faces that meet at edges and corners.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .geometry import Rectangle

__all__ = [
    "Face",
    "Grid",
    "build_grid",
    "face_values",
    "fill_ghosts",
    "fd_hessian",
    "fd_gradient",
    "hessian_from_padded",
    "gradient_from_padded",
    "normal_derivative",
    "centered_normal_derivative",
    "norms",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class Face:
    """One side of the box: outward normal ``side * e_axis``."""

    axis: int
    side: int
    normal: np.ndarray
    nodes: np.ndarray


@dataclass(frozen=True, eq=False)
class Grid:
    domain: Rectangle
    dims: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def h(self) -> np.ndarray:
        return self.domain.extents / (np.array(self.dims) - 1)

    @cached_property
    def multi_index(self) -> np.ndarray:
        """``(N, dim)`` integer index of every node."""
        grids = np.meshgrid(*[np.arange(d) for d in self.dims], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array(self.domain.lower) + self.multi_index * self.h

    @cached_property
    def codim(self) -> np.ndarray:
        """Number of faces containing each node: 0 interior, 1 face, 2+ edge/corner."""
        mi = self.multi_index
        last = np.array(self.dims) - 1
        return np.sum((mi == 0) | (mi == last), axis=1)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.codim == 0)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.codim > 0)

    def kind(self, node: int) -> str:
        c = int(self.codim[node])
        if c == 0:
            return "interior"
        if c == 1:
            return "face"
        return "corner" if c == self.dim else "edge"

    @cached_property
    def faces(self) -> tuple[Face, ...]:
        mi = self.multi_index
        out = []
        for axis in range(self.dim):
            for side, pos in ((-1, 0), (1, self.dims[axis] - 1)):
                normal = np.zeros(self.dim)
                normal[axis] = side
                out.append(Face(axis, side, normal, np.flatnonzero(mi[:, axis] == pos)))
        return tuple(out)

    @cached_property
    def face_offsets(self) -> np.ndarray:
        """Start of each face block inside a concatenated face-value vector."""
        sizes = [f.nodes.size for f in self.faces]
        return np.concatenate([[0], np.cumsum(sizes)])

    @property
    def n_face_values(self) -> int:
        return int(self.face_offsets[-1])

    @cached_property
    def face_value_nodes(self) -> np.ndarray:
        return np.concatenate([f.nodes for f in self.faces])

    @cached_property
    def padded_shape(self) -> tuple[int, ...]:
        return tuple(d + 2 for d in self.dims)

    def ravel(self, multi: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(multi.T), self.dims)

    def padded_ravel(self, multi: np.ndarray) -> np.ndarray:
        """Flat padded index of real multi-indices (which may step one outside)."""
        return np.ravel_multi_index(tuple((multi + 1).T), self.padded_shape)

    @cached_property
    def _ghosts(self):
        """Precomputed ghost closure: positions, mirrors, flux terms."""
        shape = self.padded_shape
        grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
        q = np.stack([g.ravel() for g in grids], axis=1) - 1
        dims = np.array(self.dims)
        low = q < 0
        high = q >= dims
        is_ghost = np.any(low | high, axis=1)
        pos = np.flatnonzero(is_ghost)
        qg = q[pos]
        lo_g, hi_g = low[pos], high[pos]
        mirror = np.where(lo_g, 1, np.where(hi_g, dims - 2, qg))
        proj = np.where(lo_g, 0, np.where(hi_g, dims - 1, qg))
        mirror_flat = self.ravel(mirror)
        proj_flat = self.ravel(proj)
        # flux terms: (ghost row, face-value column, weight)
        rows, cols, wts = [], [], []
        lookup = self._face_lookup
        for fid, face in enumerate(self.faces):
            mask = lo_g[:, face.axis] if face.side < 0 else hi_g[:, face.axis]
            r = np.flatnonzero(mask)
            rows.append(r)
            cols.append(self.face_offsets[fid] + lookup[fid][proj_flat[r]])
            wts.append(np.full(r.size, 2.0 * self.h[face.axis]))
        flux = sp.csr_matrix(
            (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
            shape=(pos.size, self.n_face_values),
        )
        return pos, mirror_flat, flux

    @cached_property
    def _face_lookup(self):
        out = []
        for face in self.faces:
            arr = np.full(self.n_nodes, -1, dtype=np.int64)
            arr[face.nodes] = np.arange(face.nodes.size)
            out.append(arr)
        return out

    @cached_property
    def face_selector(self) -> sp.csr_matrix:
        """``E``: picks the node value behind each face-value slot."""
        m = self.n_face_values
        return sp.csr_matrix((np.ones(m), (np.arange(m), self.face_value_nodes)), shape=(m, self.n_nodes))

    @cached_property
    def real_to_padded(self) -> np.ndarray:
        return self.padded_ravel(self.multi_index)

    def ghost_operator(self, dphi: np.ndarray) -> sp.csr_matrix:
        """Linearization ``d u_padded / d u`` given ``dphi/du`` per face-value slot."""
        pos, mirror, flux = self._ghosts
        n_pad = int(np.prod(self.padded_shape))
        real = sp.csr_matrix(
            (np.ones(self.n_nodes), (self.real_to_padded, np.arange(self.n_nodes))),
            shape=(n_pad, self.n_nodes),
        )
        ghost_rows = sp.csr_matrix(
            (np.ones(pos.size), (np.arange(pos.size), mirror)), shape=(pos.size, self.n_nodes)
        ) + flux @ sp.diags(dphi) @ self.face_selector
        place = sp.csr_matrix((np.ones(pos.size), (pos, np.arange(pos.size))), shape=(n_pad, pos.size))
        return (real + place @ ghost_rows).tocsr()

    @cached_property
    def hessian_stencils(self) -> dict[tuple[int, int], sp.csr_matrix]:
        """``D_ab``: maps padded values to the ``(a, b)`` second difference at every node."""
        mi = self.multi_index
        n_pad = int(np.prod(self.padded_shape))
        rows = np.arange(self.n_nodes)
        h = self.h
        out = {}
        for a in range(self.dim):
            ea = np.zeros(self.dim, dtype=int)
            ea[a] = 1
            cols = [self.padded_ravel(mi + ea), self.padded_ravel(mi), self.padded_ravel(mi - ea)]
            vals = [1.0, -2.0, 1.0]
            out[(a, a)] = _stencil(rows, cols, [v / h[a] ** 2 for v in vals], (self.n_nodes, n_pad))
        for a, b in combinations(range(self.dim), 2):
            ea = np.zeros(self.dim, dtype=int)
            eb = np.zeros(self.dim, dtype=int)
            ea[a] = 1
            eb[b] = 1
            cols = [self.padded_ravel(mi + sa * ea + sb * eb) for sa, sb in product((1, -1), repeat=2)]
            vals = [1.0, -1.0, -1.0, 1.0]
            w = 1.0 / (4.0 * h[a] * h[b])
            out[(a, b)] = _stencil(rows, cols, [v * w for v in vals], (self.n_nodes, n_pad))
        return out

    @cached_property
    def neumann_operator(self) -> sp.csr_matrix:
        """One-sided second-order ``u_nu`` for every face-value slot."""
        mi = self.multi_index
        rows, cols, vals = [], [], []
        for fid, face in enumerate(self.faces):
            base = self.face_offsets[fid]
            b = mi[face.nodes]
            step = np.zeros(self.dim, dtype=int)
            step[face.axis] = -face.side
            r = base + np.arange(face.nodes.size)
            w = 1.0 / (2.0 * self.h[face.axis])
            for c, off in ((3.0, 0), (-4.0, 1), (1.0, 2)):
                rows.append(r)
                cols.append(self.ravel(b + off * step))
                vals.append(np.full(r.size, c * w))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_face_values, self.n_nodes),
        )

    @cached_property
    def face_average(self) -> sp.csr_matrix:
        """Averages face-value slots onto boundary nodes (rows follow ``boundary``)."""
        bnd = self.boundary
        pos = np.full(self.n_nodes, -1, dtype=np.int64)
        pos[bnd] = np.arange(bnd.size)
        slots = np.arange(self.n_face_values)
        nodes = self.face_value_nodes
        w = 1.0 / self.codim[nodes]
        return sp.csr_matrix((w, (pos[nodes], slots)), shape=(bnd.size, self.n_face_values))

    def trapezoid_weights(self) -> np.ndarray:
        """Tensor trapezoid weights (without the cell volume)."""
        w = np.ones(self.n_nodes)
        mi = self.multi_index
        for a, d in enumerate(self.dims):
            w = w * np.where((mi[:, a] == 0) | (mi[:, a] == d - 1), 0.5, 1.0)
        return w

    def nearest_node(self, x) -> int:
        x = np.asarray(x, dtype=float)
        return int(np.argmin(np.sum((self.coords - x) ** 2, axis=1)))


def _stencil(rows, cols, vals, shape):
    r = np.concatenate([rows] * len(cols))
    c = np.concatenate(cols)
    v = np.concatenate([np.full(rows.size, val) for val in vals])
    return sp.csr_matrix((v, (r, c)), shape=shape)


def build_grid(dom: Rectangle, dims) -> Grid:
    """Vertex-centred grid with ``h = extent / (dims - 1)`` per axis."""
    if not isinstance(dom, Rectangle):
        raise InvalidArgument("grids are built on rectangles only")
    dims = tuple(int(d) for d in dims)
    if len(dims) != dom.dim:
        raise InvalidArgument(f"need {dom.dim} grid dimensions, got {len(dims)}")
    if any(d < 5 for d in dims):
        raise InvalidArgument(f"every grid dimension must be >= 5, got {dims}")
    return Grid(dom, dims)


def face_values(grid: Grid, u: np.ndarray, phi) -> np.ndarray:
    """Evaluate ``phi(points, u_values, normal)`` on every face-value slot."""
    out = np.empty(grid.n_face_values)
    for fid, face in enumerate(grid.faces):
        sl = slice(grid.face_offsets[fid], grid.face_offsets[fid + 1])
        vals = phi(grid.coords[face.nodes], u[face.nodes], face.normal)
        out[sl] = np.broadcast_to(np.asarray(vals, dtype=float), (face.nodes.size,))
    return out


def fill_ghosts(grid: Grid, u, phi) -> np.ndarray:
    """Pad ``u`` with the ghost layer for boundary data ``phi``.

    ``phi`` is either a callable ``phi(points, u_values, normal)`` or a
    precomputed face-value vector.  Returns an array of ``grid.padded_shape``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise InvalidArgument("field length does not match the grid")
    vals = phi if isinstance(phi, np.ndarray) else face_values(grid, u, phi)
    pos, mirror, flux = grid._ghosts
    padded = np.empty(int(np.prod(grid.padded_shape)))
    padded[grid.real_to_padded] = u
    padded[pos] = u[mirror] + flux @ vals
    return padded.reshape(grid.padded_shape)


def _shift(padded: np.ndarray, dims, offset) -> np.ndarray:
    sl = tuple(slice(1 + o, 1 + o + d) for o, d in zip(offset, dims))
    return padded[sl]


def hessian_from_padded(grid: Grid, padded: np.ndarray) -> np.ndarray:
    """``(N, dim, dim)`` centered second differences at every node."""
    dims, h, n = grid.dims, grid.h, grid.dim
    out = np.empty(dims + (n, n))
    zero = (0,) * n
    centre = _shift(padded, dims, zero)
    for a in range(n):
        e = [0] * n
        e[a] = 1
        m = [0] * n
        m[a] = -1
        out[..., a, a] = (_shift(padded, dims, e) - 2.0 * centre + _shift(padded, dims, m)) / h[a] ** 2
    for a, b in combinations(range(n), 2):
        acc = 0.0
        for sa, sb in product((1, -1), repeat=2):
            off = [0] * n
            off[a], off[b] = sa, sb
            acc = acc + sa * sb * _shift(padded, dims, off)
        out[..., a, b] = out[..., b, a] = acc / (4.0 * h[a] * h[b])
    return out.reshape(-1, n, n)


def gradient_from_padded(grid: Grid, padded: np.ndarray) -> np.ndarray:
    dims, h, n = grid.dims, grid.h, grid.dim
    out = np.empty(dims + (n,))
    for a in range(n):
        e = [0] * n
        e[a] = 1
        m = [0] * n
        m[a] = -1
        out[..., a] = (_shift(padded, dims, e) - _shift(padded, dims, m)) / (2.0 * h[a])
    return out.reshape(-1, n)


def fd_hessian(grid: Grid, u, phi) -> np.ndarray:
    """Second differences at every node, boundary nodes through the ghost layer."""
    return hessian_from_padded(grid, fill_ghosts(grid, u, phi))


def fd_gradient(grid: Grid, u, phi) -> np.ndarray:
    """Centered first differences at every node."""
    return gradient_from_padded(grid, fill_ghosts(grid, u, phi))


def normal_derivative(grid: Grid, u) -> np.ndarray:
    """One-sided second-order ``u_nu`` on every face-value slot."""
    return grid.neumann_operator @ np.asarray(u, dtype=float)


def centered_normal_derivative(grid: Grid, padded: np.ndarray) -> np.ndarray:
    """Centered ``(u_ghost - u_inner) / (2h)`` on every face-value slot."""
    flat = padded.ravel()
    mi = grid.multi_index
    out = np.empty(grid.n_face_values)
    for fid, face in enumerate(grid.faces):
        b = mi[face.nodes]
        e = np.zeros(grid.dim, dtype=int)
        e[face.axis] = face.side
        out[grid.face_offsets[fid] : grid.face_offsets[fid + 1]] = (
            flat[grid.padded_ravel(b + e)] - flat[grid.padded_ravel(b - e)]
        ) / (2.0 * grid.h[face.axis])
    return out


def norms(grid: Grid, values) -> tuple[float, float]:
    """``(max |v|, sqrt(prod(h) * sum v^2))``; numpy's pairwise sum keeps it reproducible."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(v))), float(np.sqrt(np.prod(grid.h) * np.sum(v * v)))


def write_field(path, grid: Grid, values) -> None:
    """Text dump: ``# nx ny hx hy`` header then one ``x y value`` row per node.

    A blank line follows each run of nodes along the last axis, which is the
    scanline layout gnuplot's ``splot`` expects for surfaces.
    """
    v = np.asarray(values, dtype=float)
    head = " ".join(str(d) for d in grid.dims) + " " + " ".join(_fmt(x) for x in grid.h)
    lines = ["# " + head]
    run = grid.dims[-1]
    for node, (xyz, val) in enumerate(zip(grid.coords, v)):
        lines.append(" ".join(_fmt(c) for c in xyz) + " " + _fmt(val))
        if (node + 1) % run == 0 and node + 1 < v.size:
            lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_field(path):
    """Inverse of :func:`write_field`: returns ``(dims, h, coords, values)``."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = text[0].lstrip("#").split()
    dim = len(head) // 2
    dims = tuple(int(v) for v in head[:dim])
    h = np.array([float(v) for v in head[dim:]])
    data = np.array([[float(t) for t in line.split()] for line in text[1:] if line.strip()])
    return dims, h, data[:, :dim], data[:, dim]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")
