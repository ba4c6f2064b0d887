"""Exact enumeration of the convex cells induced by a CPWL network.

Recursive polyhedral subdivision: start from the whole domain with the
identity piece; per layer, pull the layer's switching hyperplanes back
through each cell's composed affine map, split the cell by each hyperplane
(keeping sides that pass an interior test), then update every surviving
cell's piece using the activation piece active at its witness.

Backends: exact interval splitting (1 input), convex-polygon clipping
(2 inputs), and an LP feasibility kernel (3+ inputs, with an exact fast path
for axis-aligned cuts). Cell processing is pure and order-independent; the
output ordering is canonicalized, so results are deterministic.
"""
from __future__ import annotations

import colorsys
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .core import (Affine, AffineMap, GroupSort, Layer, Maxout, NetworkSpec,
                   Pointwise, PWLU2D, ValidationError, layer_piece)


@dataclass(frozen=True)
class GeometryConfig:
    r_max: float = 1e6            # artificial bounding box for unbounded domains
    eps_interior: float = 1e-7    # minimal interior margin for a cell to count
    dedup_tol: float = 1e-9       # hyperplane deduplication tolerance
    zero_normal_tol: float = 1e-12  # pulled-back normals below this are skipped
    fingerprint_tol: float = 1e-6   # relative rounding for piece fingerprints
    cell_budget: int = 10 ** 6


DEFAULT_CONFIG = GeometryConfig()


class BudgetExceeded(RuntimeError):
    """Cell budget hit during subdivision."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"cell budget exceeded: {count} > {budget}")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space {x : normal . x + offset >= 0}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=float)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class Witness:
    point: np.ndarray
    margin: float
    status: str  # "interior" | "degenerate" | "empty"


@dataclass
class Region:
    """One subdivision cell: bounding half-spaces, the network's affine piece
    on it, and a strictly interior witness point."""

    constraints: tuple[HalfSpace, ...]
    piece: AffineMap
    witness: np.ndarray


@dataclass
class RegionSet:
    input_dim: int
    regions: list[Region]
    domain: Optional[tuple[np.ndarray, np.ndarray]]  # None = unbounded (R_max box)

    def __len__(self) -> int:
        return len(self.regions)


@dataclass
class CountReport:
    cell_count: int
    distinct_piece_count: int
    connected_piece_count: int
    bounds: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# LP feasibility kernel
# ---------------------------------------------------------------------------

def interior_witness_report(constraints: Sequence[HalfSpace | tuple],
                            cfg: GeometryConfig = DEFAULT_CONFIG,
                            bounds: Optional[tuple[np.ndarray, np.ndarray]] = None,
                            equality: Optional[tuple[np.ndarray, float]] = None,
                            dim: Optional[int] = None) -> Witness:
    """Chebyshev-style LP: maximize eps s.t. a_i.x + c_i >= eps*||a_i|| within
    |x_j| <= R_max (or the given bounds), eps <= R_max.

    Status "interior" iff eps* > eps_interior; "degenerate" for
    0 <= eps* <= eps_interior; "empty" when infeasible or eps* < 0.
    """
    rows = []
    for h in constraints:
        if isinstance(h, HalfSpace):
            rows.append((np.asarray(h.normal, dtype=float), float(h.offset)))
        else:
            rows.append((np.asarray(h[0], dtype=float), float(h[1])))
    if dim is None:
        if rows:
            dim = rows[0][0].shape[0]
        elif bounds is not None:
            dim = np.asarray(bounds[0]).shape[0]
        elif equality is not None:
            dim = np.asarray(equality[0]).shape[0]
        else:
            raise ValidationError("cannot infer dimension for the witness LP")
    if bounds is None:
        lo = np.full(dim, -cfg.r_max)
        hi = np.full(dim, cfg.r_max)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
    if not rows and equality is None:
        return Witness((lo + hi) / 2.0, cfg.r_max, "interior")
    # Variables (x_1..x_d, eps); maximize eps.
    A_ub, b_ub = [], []
    for a, c in rows:
        A_ub.append(np.concatenate([-a, [np.linalg.norm(a)]]))
        b_ub.append(c)
    A_eq = b_eq = None
    if equality is not None:
        a_eq, c_eq = equality
        A_eq = [np.concatenate([np.asarray(a_eq, dtype=float), [0.0]])]
        b_eq = [-float(c_eq)]
    var_bounds = [(float(l), float(h)) for l, h in zip(lo, hi)] + [(None, cfg.r_max)]
    res = linprog(c=np.concatenate([np.zeros(dim), [-1.0]]),
                  A_ub=np.array(A_ub) if A_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(A_eq) if A_eq is not None else None,
                  b_eq=np.array(b_eq) if b_eq is not None else None,
                  bounds=var_bounds, method="highs")
    if not res.success:
        return Witness(np.zeros(dim), -math.inf, "empty")
    eps = float(res.x[-1])
    point = np.array(res.x[:-1])
    if eps > cfg.eps_interior:
        return Witness(point, eps, "interior")
    if eps >= 0.0:
        return Witness(point, eps, "degenerate")
    return Witness(point, eps, "empty")


def interior_witness(constraints: Sequence[HalfSpace | tuple],
                     cfg: GeometryConfig = DEFAULT_CONFIG,
                     dim: Optional[int] = None) -> Optional[Witness]:
    """Interior point of the half-space intersection, or None when the
    interior is empty or thinner than the configured margin."""
    w = interior_witness_report(constraints, cfg, dim=dim)
    return w if w.status == "interior" else None


# ---------------------------------------------------------------------------
# Subdivision cells and backends
# ---------------------------------------------------------------------------

@dataclass
class _Cell:
    A: np.ndarray
    b: np.ndarray
    constraints: list
    witness: np.ndarray
    geom: object


def _normalize_domain(domain, d: int, r_max: float):
    """Returns (lo, hi, bounded)."""
    if domain is None:
        return np.full(d, -r_max), np.full(d, r_max), False
    lo, hi = domain
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,)).copy()
    if not np.all(lo < hi):
        raise ValidationError("domain box must have positive extent")
    return lo, hi, True


class _IntervalBackend:
    """d = 1: cells are intervals (lo, hi)."""

    def __init__(self, cfg: GeometryConfig):
        self.cfg = cfg

    def root(self, lo, hi):
        return (float(lo[0]), float(hi[0])), np.array([(lo[0] + hi[0]) / 2.0])

    def split(self, cell: _Cell, a: np.ndarray, c: float):
        lo, hi = cell.geom
        aa = float(a[0])
        t = -c / aa
        eps = self.cfg.eps_interior * max(1.0, abs(t))
        if not (lo + eps < t < hi - eps):
            return None
        left = ((lo, t), np.array([(lo + t) / 2.0]))
        right = ((t, hi), np.array([(t + hi) / 2.0]))
        neg, pos = (right, left) if aa < 0 else (left, right)
        return (neg[0], neg[1]), (pos[0], pos[1])


def _clip_polygon(verts: np.ndarray, a: np.ndarray, c: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Split a convex polygon by the line a.x + c = 0; returns (neg, pos)
    vertex arrays (either may be empty)."""
    vals = verts @ a + c
    n = len(verts)
    neg, pos = [], []
    for i in range(n):
        j = (i + 1) % n
        vi, vj = vals[i], vals[j]
        p = verts[i]
        if vi <= 0:
            neg.append(p)
        if vi >= 0:
            pos.append(p)
        if (vi < 0 < vj) or (vj < 0 < vi):
            t = vi / (vi - vj)
            q = p + t * (verts[j] - p)
            neg.append(q)
            pos.append(q)
    return np.array(neg) if neg else np.empty((0, 2)), np.array(pos) if pos else np.empty((0, 2))


def _polygon_area_perimeter(verts: np.ndarray) -> tuple[float, float]:
    if len(verts) < 3:
        return 0.0, 0.0
    x, y = verts[:, 0], verts[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    per = float(np.sum(np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)))
    return float(area), per


def _polygon_centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    xr, yr = np.roll(x, -1), np.roll(y, -1)
    cross = x * yr - xr * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-300:
        return verts.mean(axis=0)
    cx = ((x + xr) * cross).sum() / (6.0 * a)
    cy = ((y + yr) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


class _PolygonBackend:
    """d = 2: cells are convex polygons, split by Sutherland-Hodgman clipping.

    A clipped side survives if its area/perimeter ratio (a lower bound on the
    inradius: eroding a convex set by t removes at most perimeter*t of area)
    exceeds the interior margin.
    """

    def __init__(self, cfg: GeometryConfig):
        self.cfg = cfg

    def root(self, lo, hi):
        verts = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        return verts, verts.mean(axis=0)

    def _admissible(self, verts: np.ndarray) -> bool:
        if len(verts) < 3:
            return False
        area, per = _polygon_area_perimeter(verts)
        return per > 0 and area / per > self.cfg.eps_interior

    def split(self, cell: _Cell, a: np.ndarray, c: float):
        verts = cell.geom
        vals = verts @ a + c
        scale = np.linalg.norm(a)
        m = self.cfg.eps_interior * scale
        if vals.min() >= -m or vals.max() <= m:
            return None  # clearly one-sided (possibly touching)
        neg, pos = _clip_polygon(verts, a, c)
        if not self._admissible(neg) or not self._admissible(pos):
            return None
        return (neg, _polygon_centroid(neg)), (pos, _polygon_centroid(pos))


class _LPBackend:
    """d >= 3: cells tracked by constraint lists + an outer bounding box.

    Axis-aligned cuts on cells whose constraints are all axis-aligned are
    resolved exactly on the box; everything else goes through the witness LP.
    """

    def __init__(self, cfg: GeometryConfig):
        self.cfg = cfg

    def root(self, lo, hi):
        return {"lo": lo.copy(), "hi": hi.copy(), "axis_exact": True}, (lo + hi) / 2.0

    def split(self, cell: _Cell, a: np.ndarray, c: float):
        cfg = self.cfg
        geom = cell.geom
        nz = np.flatnonzero(np.abs(a) > cfg.zero_normal_tol * max(1.0, np.abs(a).max()))
        if len(nz) == 1:
            j = nz[0]
            t = -c / a[j]
            lo_j, hi_j = geom["lo"][j], geom["hi"][j]
            eps = cfg.eps_interior * max(1.0, abs(t))
            if t <= lo_j + eps or t >= hi_j - eps:
                if geom["axis_exact"]:
                    return None  # box is exact: no split
                if t <= lo_j or t >= hi_j:
                    return None  # outer box already excludes one side
            elif geom["axis_exact"]:
                g_lo = {"lo": geom["lo"].copy(), "hi": geom["hi"].copy(), "axis_exact": True}
                g_hi = {"lo": geom["lo"].copy(), "hi": geom["hi"].copy(), "axis_exact": True}
                g_lo["hi"][j] = t
                g_hi["lo"][j] = t
                w_lo, w_hi = (g_lo["lo"] + g_lo["hi"]) / 2.0, (g_hi["lo"] + g_hi["hi"]) / 2.0
                low_side = (g_lo, w_lo)
                high_side = (g_hi, w_hi)
                return (high_side, low_side) if a[j] < 0 else (low_side, high_side)
        # General LP split.
        box = (geom["lo"], geom["hi"])
        pos_w = interior_witness_report(cell.constraints + [(a, c)], cfg, bounds=box)
        neg_w = interior_witness_report(cell.constraints + [(-a, -c)], cfg, bounds=box)
        if pos_w.status != "interior" or neg_w.status != "interior":
            return None
        def shrink(g):
            return {"lo": g["lo"].copy(), "hi": g["hi"].copy(), "axis_exact": False}
        return ((shrink(geom), neg_w.point), (shrink(geom), pos_w.point))


def _backend_for(d: int, cfg: GeometryConfig):
    if d == 1:
        return _IntervalBackend(cfg)
    if d == 2:
        return _PolygonBackend(cfg)
    return _LPBackend(cfg)


# ---------------------------------------------------------------------------
# Layer hyperplanes (pulled back to input space through the cell's piece)
# ---------------------------------------------------------------------------

def _hyperplane_key(a: np.ndarray, c: float, tol: float) -> tuple:
    nrm = np.linalg.norm(a)
    v = np.concatenate([a, [c]]) / nrm
    for x in v[:-1]:
        if abs(x) > tol:
            if x < 0:
                v = -v
            break
    digits = max(0, int(round(-math.log10(tol))))
    return tuple(np.round(v, digits))


def _layer_hyperplanes(layer: Layer, A: np.ndarray, b: np.ndarray,
                       cfg: GeometryConfig) -> list[tuple[np.ndarray, float, object]]:
    """Candidate switching hyperplanes of one layer on one cell, pulled back
    through the cell's composed piece (A, b). Entries are (normal, offset,
    guard); a guard is a predicate on the witness pre-activation that limits
    where the hyperplane can switch anything (used by PWLU diagonals, which
    only act inside the clamp box)."""
    out = []
    if isinstance(layer, Pointwise):
        for k, f in enumerate(layer.units):
            for brk in f.breakpoints:
                out.append((A[k], float(b[k] - brk), None))
    elif isinstance(layer, GroupSort):
        g = layer.group_size
        n = A.shape[0]
        for start in range(0, n, g):
            for i in range(start, start + g):
                for j in range(i + 1, start + g):
                    out.append((A[i] - A[j], float(b[i] - b[j]), None))
    elif isinstance(layer, PWLU2D):
        m = layer.grid_m
        h = layer.grid_step
        for k, rmap in enumerate(layer.readins):
            R = rmap.matrix @ A
            s = rmap.matrix @ b + rmap.offset
            for i in range(m):
                g = layer.grid_node(i)
                out.append((R[0], float(s[0] - g), None))
                out.append((R[1], float(s[1] - g), None))
            diag = R[0] - R[1]
            ds = float(s[0] - s[1])

            def make_guard(rm):
                def guard(Ac, bc, w):
                    uv = rm.matrix @ (Ac @ w + bc) + rm.offset
                    return abs(uv[0]) < 1.0 and abs(uv[1]) < 1.0
                return guard
            guard = make_guard(rmap)
            for k2 in range(-(m - 2), m - 1):
                out.append((diag, float(ds - k2 * h), guard))
    elif isinstance(layer, Affine):
        pass
    else:
        raise ValidationError(f"unknown layer type {type(layer).__name__}")
    # Near-zero normals are skipped: the activation piece on such a unit is
    # constant over the cell and gets picked by the witness sign.
    filtered = []
    seen = set()
    for a, c, guard in out:
        scale = float(np.abs(a).max()) if a.size else 0.0
        if scale < cfg.zero_normal_tol:
            continue
        key = _hyperplane_key(a, c, cfg.dedup_tol)
        if key in seen:
            continue
        seen.add(key)
        filtered.append((a, c, guard))
    return filtered


def _clip_positive(backend, p: "_Cell", a: np.ndarray, c: float):
    """Clip cell ``p`` to the side {a.x + c >= 0}: returns ``p`` itself when
    the cell (up to slivers) already lies there, ``None`` when essentially
    nothing does, or a new smaller cell. Sliver sides follow the witness, so
    geometry is never shaved off without an actual crossing."""
    res = backend.split(p, a, c)
    if res is None:
        return p if float(a @ p.witness + c) > 0.0 else None
    (_, _), (g_pos, w_pos) = res
    return _Cell(p.A, p.b, p.constraints + [(a, c)], w_pos, g_pos)


def _maxout_parts(backend, cell: "_Cell", layer: Maxout,
                  cfg: GeometryConfig) -> list["_Cell"]:
    """Subdivide a cell into the argmax regions of every maxout unit.

    Each unit contributes at most ``rank`` subcells per part (one per
    candidate attaining the max somewhere), so the subdivision never refines
    beyond the unit's actual fold set — pairwise tie hyperplanes where
    neither candidate attains the max are not folds and must not split."""
    parts = [cell]
    for u in range(layer.weights.shape[0]):
        W, o = layer.weights[u], layer.offsets[u]
        K = layer.rank
        new_parts = []
        for p in parts:
            R = W @ p.A
            s = W @ p.b + o
            scale = max(1.0, float(np.abs(R).max()))
            kept = []
            for j in range(K):
                q = p
                dead = False
                for i in range(K):
                    if i == j:
                        continue
                    a = R[j] - R[i]
                    c = float(s[j] - s[i])
                    if np.abs(a).max() < cfg.zero_normal_tol * scale:
                        if c < -cfg.zero_normal_tol * scale:
                            dead = True          # dominated everywhere
                        elif abs(c) <= cfg.zero_normal_tol * scale and i < j:
                            dead = True          # identical candidate: first wins
                        if dead:
                            break
                        continue
                    q = _clip_positive(backend, q, a, c)
                    if q is None:
                        dead = True
                        break
                if not dead:
                    kept.append(q)
            if len(kept) <= 1:
                new_parts.append(p)  # unit is affine on this part
            else:
                new_parts.extend(kept)
        parts = new_parts
    return parts


# ---------------------------------------------------------------------------
# Main enumeration
# ---------------------------------------------------------------------------

def enumerate_regions(net: NetworkSpec, domain=None,
                      cfg: GeometryConfig = DEFAULT_CONFIG) -> RegionSet:
    """Subdivide the domain into the network's convex linear cells.

    ``domain`` is None (unbounded; an R_max box bounds the search) or a box
    ``(lo, hi)`` with scalars or per-coordinate arrays. Raises
    ``BudgetExceeded`` past ``cfg.cell_budget`` cells.
    """
    d = net.input_dim
    lo, hi, bounded = _normalize_domain(domain, d, cfg.r_max)
    backend = _backend_for(d, cfg)
    geom, w = backend.root(lo, hi)
    cells = [_Cell(np.eye(d), np.zeros(d), [], w, geom)]
    for layer in net.layers:
        if isinstance(layer, Affine):
            for cell in cells:
                cell.A = layer.map.matrix @ cell.A
                cell.b = layer.map.matrix @ cell.b + layer.map.offset
            continue
        out_cells: list[_Cell] = []
        for cell in cells:
            if isinstance(layer, Maxout):
                parts = _maxout_parts(backend, cell, layer, cfg)
                if len(out_cells) + len(parts) > cfg.cell_budget:
                    raise BudgetExceeded(len(out_cells) + len(parts), cfg.cell_budget)
                out_cells.extend(parts)
                continue
            hps = _layer_hyperplanes(layer, cell.A, cell.b, cfg)
            parts = [cell]
            for a, c, guard in hps:
                new_parts = []
                for p in parts:
                    if guard is not None and not guard(p.A, p.b, p.witness):
                        new_parts.append(p)
                        continue
                    res = backend.split(p, a, c)
                    if res is None:
                        new_parts.append(p)
                        continue
                    (g_neg, w_neg), (g_pos, w_pos) = res
                    new_parts.append(_Cell(p.A, p.b, p.constraints + [(-a, -c)], w_neg, g_neg))
                    new_parts.append(_Cell(p.A, p.b, p.constraints + [(a, c)], w_pos, g_pos))
                parts = new_parts
                if len(out_cells) + len(parts) > cfg.cell_budget:
                    raise BudgetExceeded(len(out_cells) + len(parts), cfg.cell_budget)
            out_cells.extend(parts)
        for cell in out_cells:
            z = cell.A @ cell.witness + cell.b
            S, c0 = layer_piece(layer, z)
            cell.A = S @ cell.A
            cell.b = S @ cell.b + c0
        cells = out_cells
    cells.sort(key=lambda cell: (tuple(np.round(cell.witness, 9)), len(cell.constraints)))
    regions = [Region(tuple(HalfSpace(a, c) for a, c in cell.constraints),
                      AffineMap(cell.A, cell.b), cell.witness.copy())
               for cell in cells]
    return RegionSet(d, regions, (lo, hi) if bounded else None)


def piece_fingerprint(piece: AffineMap, tol: float = DEFAULT_CONFIG.fingerprint_tol) -> tuple:
    """Quantized (matrix, offset) key; equal pieces map to equal keys, pieces
    differing by more than the relative tolerance map to different keys."""
    flat = np.concatenate([piece.matrix.ravel(), piece.offset.ravel()])
    scale = max(1.0, float(np.abs(flat).max()))
    q = tol * scale
    return tuple(np.round(flat / q).astype(np.int64).tolist())


def _domain_halfspaces(rs: RegionSet) -> list[tuple[np.ndarray, float]]:
    if rs.domain is None:
        return []
    lo, hi = rs.domain
    out = []
    for j in range(rs.input_dim):
        e = np.zeros(rs.input_dim)
        e[j] = 1.0
        out.append((e.copy(), -float(lo[j])))
        out.append((-e, float(hi[j])))
    return out


def _facet_adjacent(p: Region, q: Region, rs: RegionSet, cfg: GeometryConfig) -> bool:
    """Two cells share a (d-1)-face iff some constraint hyperplane of one,
    taken as an equality, still leaves an interior point of the combined
    constraint sets. The first hyperplane that split the two lineages apart
    appears in both cells' constraint lists, so scanning one list suffices."""
    combined = [(h.normal, h.offset) for h in p.constraints + q.constraints]
    combined += _domain_halfspaces(rs)
    tried = set()
    for h in p.constraints:
        key = _hyperplane_key(h.normal, h.offset, cfg.dedup_tol)
        if key in tried:
            continue
        tried.add(key)
        rest = [row for row in combined
                if _hyperplane_key(row[0], row[1], cfg.dedup_tol) != key]
        w = interior_witness_report(rest, cfg, equality=(h.normal, h.offset),
                                    dim=rs.input_dim)
        if w.status == "interior":
            return True
    return False


def count_report(rs: RegionSet, net: Optional[NetworkSpec] = None,
                 cfg: GeometryConfig = DEFAULT_CONFIG) -> CountReport:
    """Cell count, distinct affine pieces, and connected components of
    equal-piece cells under facet adjacency."""
    fps = [piece_fingerprint(r.piece, cfg.fingerprint_tol) for r in rs.regions]
    groups: dict[tuple, list[int]] = {}
    for i, fp in enumerate(fps):
        groups.setdefault(fp, []).append(i)
    # Union-find over same-piece facet adjacency.
    parent = list(range(len(rs.regions)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for idxs in groups.values():
        for ii in range(len(idxs)):
            for jj in range(ii + 1, len(idxs)):
                a, b = idxs[ii], idxs[jj]
                if find(a) == find(b):
                    continue
                if _facet_adjacent(rs.regions[a], rs.regions[b], rs, cfg):
                    parent[find(a)] = find(b)
    components = len({find(i) for i in range(len(rs.regions))})
    bounds_attached = {}
    if net is not None:
        bounds_attached["arrangement_upper"] = network_arrangement_upper(net)
    return CountReport(cell_count=len(rs.regions),
                       distinct_piece_count=len(groups),
                       connected_piece_count=components,
                       bounds=bounds_attached)


def network_arrangement_upper(net: NetworkSpec) -> int:
    """Layer-by-layer arrangement bound: product over non-affine layers of
    beta(min prefix dim, effective per-unit region counts)."""
    from .bounds import beta
    dims = net.dims
    total = 1
    for l, layer in enumerate(net.layers):
        d_eff = min(dims[: l + 1])
        if isinstance(layer, Pointwise):
            ns = [f.region_count for f in layer.units]
        elif isinstance(layer, Maxout):
            ns = [layer.rank] * layer.weights.shape[0]
        elif isinstance(layer, GroupSort):
            ns = [math.factorial(layer.group_size)] * (dims[l + 1] // layer.group_size)
        elif isinstance(layer, PWLU2D):
            # Grid pieces plus the clamped edge strips and constant corners.
            m = layer.grid_m
            ns = [2 * (m - 1) ** 2 + 4 * (m - 1) + 4] * layer.values.shape[0]
        else:
            continue
        total *= beta(d_eff, ns)
    return total


def regions_containing(rs: RegionSet, x: np.ndarray, tol: float = 1e-9) -> list[int]:
    """Indices of cells whose half-spaces all hold at ``x`` within tolerance
    (points on facets belong to every touching cell)."""
    x = np.asarray(x, dtype=float)
    out = []
    for i, r in enumerate(rs.regions):
        ok = True
        for h in r.constraints:
            if h.normal @ x + h.offset < -tol * max(1.0, float(np.linalg.norm(h.normal))):
                ok = False
                break
        if ok:
            out.append(i)
    return out


# ---------------------------------------------------------------------------
# Rendering and export
# ---------------------------------------------------------------------------

def _region_polygon(region: Region, box: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    lo, hi = box
    verts = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    for h in region.constraints:
        _, verts = _clip_polygon(verts, h.normal, h.offset)
        if len(verts) < 3:
            return np.empty((0, 2))
    return verts


def _fingerprint_color(fp: tuple) -> str:
    digest = hashlib.sha256(repr(fp).encode()).digest()
    hue = digest[0] / 255.0
    sat = 0.45 + 0.3 * (digest[1] / 255.0)
    light = 0.55 + 0.25 * (digest[2] / 255.0)
    r, g, b = colorsys.hls_to_rgb(hue, light, sat)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(rs: RegionSet, box, style: Optional[dict] = None) -> str:
    """SVG map of a 2D RegionSet clipped to ``box``; cells filled by a color
    hashed from their piece fingerprint, total cell count annotated."""
    if rs.input_dim != 2:
        raise ValidationError("rendering requires a 2D region set")
    lo, hi, _ = _normalize_domain(box, 2, DEFAULT_CONFIG.r_max)
    style = style or {}
    width = style.get("width", 640)
    height = style.get("height", 640)
    sx = width / (hi[0] - lo[0])
    sy = height / (hi[1] - lo[1])

    def to_px(p):
        return (p[0] - lo[0]) * sx, height - (p[1] - lo[1]) * sy

    polys = []
    for r in rs.regions:
        verts = _region_polygon(r, (lo, hi))
        if len(verts) < 3:
            continue
        fp = piece_fingerprint(r.piece)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to_px(v) for v in verts))
        polys.append(f'<polygon points="{pts}" fill="{_fingerprint_color(fp)}" '
                     f'stroke="#333333" stroke-width="1"/>')
    label = f"({len(polys)})"
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    parts.extend(polys)
    parts.append(f'<text x="10" y="24" font-family="sans-serif" font-size="18" '
                 f'fill="#000000">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def region_set_to_json(rs: RegionSet) -> dict:
    return {
        "input_dim": rs.input_dim,
        "domain": None if rs.domain is None else
            {"lo": rs.domain[0].tolist(), "hi": rs.domain[1].tolist()},
        "regions": [
            {
                "constraints": [{"normal": h.normal.tolist(), "offset": h.offset}
                                for h in r.constraints],
                "piece": {"matrix": r.piece.matrix.tolist(),
                          "offset": r.piece.offset.tolist()},
                "witness": r.witness.tolist(),
            }
            for r in rs.regions
        ],
    }


def count_report_to_csv(report: CountReport) -> str:
    cols = ["cell_count", "distinct_piece_count", "connected_piece_count"]
    vals = [report.cell_count, report.distinct_piece_count, report.connected_piece_count]
    for k in sorted(report.bounds):
        cols.append(k)
        vals.append(report.bounds[k])
    return ",".join(cols) + "\n" + ",".join(str(v) for v in vals) + "\n"


# ---------------------------------------------------------------------------
# Exact-rational adjudication mode (d <= 2, affine + pointwise layers)
# ---------------------------------------------------------------------------

def _frac_clip(verts: list, a: list, c: Fraction):
    vals = [a[0] * v[0] + (a[1] * v[1] if len(v) > 1 else 0) + c for v in verts]
    n = len(verts)
    neg, pos = [], []
    for i in range(n):
        j = (i + 1) % n
        vi, vj = vals[i], vals[j]
        p = verts[i]
        if vi <= 0:
            neg.append(p)
        if vi >= 0:
            pos.append(p)
        if (vi < 0 < vj) or (vj < 0 < vi):
            t = vi / (vi - vj)
            q = tuple(p[k] + t * (verts[j][k] - p[k]) for k in range(len(p)))
            neg.append(q)
            pos.append(q)
    return neg, pos


def _frac_area2(verts: list) -> Fraction:
    s = Fraction(0)
    for i in range(len(verts)):
        j = (i + 1) % len(verts)
        s += verts[i][0] * verts[j][1] - verts[j][0] * verts[i][1]
    return abs(s)


def exact_cell_count(net: NetworkSpec, domain) -> tuple[int, int]:
    """Exact-rational subdivision for 1D/2D networks with affine and
    pointwise layers only: every float input is treated as the rational it
    exactly encodes, splits are decided by exact arithmetic (a side survives
    iff it has positive measure), and distinct pieces compare exactly.
    Returns (cell_count, distinct_piece_count). Adjudication tool: slower
    than ``enumerate_regions`` but immune to tolerance artifacts.
    """
    d = net.input_dim
    if d > 2:
        raise ValidationError("exact mode supports 1 or 2 inputs")
    for layer in net.layers:
        if not isinstance(layer, (Affine, Pointwise)):
            raise ValidationError("exact mode supports affine and pointwise layers only")
    lo, hi, _ = _normalize_domain(domain, d, DEFAULT_CONFIG.r_max)
    F = Fraction
    if d == 1:
        cells = [((F(lo[0]), F(hi[0])), [[F(1)]], [F(0)])]
    else:
        box = [(F(lo[0]), F(lo[1])), (F(hi[0]), F(lo[1])),
               (F(hi[0]), F(hi[1])), (F(lo[0]), F(hi[1]))]
        cells = [(box, [[F(1), F(0)], [F(0), F(1)]], [F(0), F(0)])]

    def mid(geom):
        if d == 1:
            return [(geom[0] + geom[1]) / 2]
        sx = sum(v[0] for v in geom) / len(geom)
        sy = sum(v[1] for v in geom) / len(geom)
        return [sx, sy]

    for layer in net.layers:
        if isinstance(layer, Affine):
            M = [[F(x) for x in row] for row in layer.map.matrix.tolist()]
            o = [F(x) for x in layer.map.offset.tolist()]
            cells = [(geom,
                      [[sum(M[i][k] * A[k][j] for k in range(len(A))) for j in range(d)]
                       for i in range(len(M))],
                      [sum(M[i][k] * b[k] for k in range(len(b))) + o[i]
                       for i in range(len(M))])
                     for geom, A, b in cells]
            continue
        new_cells = []
        for geom, A, b in cells:
            parts = [geom]
            for k, f in enumerate(layer.units):
                for brk in f.breakpoints:
                    a_row = A[k]
                    c_off = b[k] - F(brk)
                    next_parts = []
                    for g in parts:
                        if d == 1:
                            aa = a_row[0]
                            if aa == 0:
                                next_parts.append(g)
                                continue
                            t = -c_off / aa
                            if g[0] < t < g[1]:
                                next_parts.append((g[0], t))
                                next_parts.append((t, g[1]))
                            else:
                                next_parts.append(g)
                        else:
                            if a_row[0] == 0 and a_row[1] == 0:
                                next_parts.append(g)
                                continue
                            neg, pos = _frac_clip(g, a_row, c_off)
                            if len(neg) >= 3 and _frac_area2(neg) > 0 and \
                                    len(pos) >= 3 and _frac_area2(pos) > 0:
                                next_parts.append(neg)
                                next_parts.append(pos)
                            else:
                                next_parts.append(g)
                    parts = next_parts
            for g in parts:
                w = mid(g)
                z = [sum(A[i][k] * w[k] for k in range(d)) + b[i] for i in range(len(b))]
                A2, b2 = [], []
                for i, f in enumerate(layer.units):
                    idx = 0
                    for brk in f.breakpoints:
                        if z[i] > F(brk):
                            idx += 1
                        else:
                            break
                    s, c0 = f.piece_line(idx)
                    A2.append([F(s) * A[i][k] for k in range(d)])
                    b2.append(F(s) * b[i] + F(c0))
                new_cells.append((g, A2, b2))
        cells = new_cells
    pieces = {tuple(tuple(row) for row in A) + tuple(b) for _, A, b in cells}
    return len(cells), len(pieces)
