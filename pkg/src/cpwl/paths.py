"""Exact knot counting along 1D polygonal paths.

A network restricted to a straight segment is a CPWL function of the arc
parameter. Each segment is propagated layer by layer as a subdivision of the
parameter interval with one affine profile ``z(s) = Q + P*s`` per piece: every
layer contributes exact cut points in closed form (breakpoint crossings,
envelope switches, grid/diagonal crossings), then the active piece on each
sub-interval is selected at its midpoint. A cut is a knot iff the restricted
affine piece (slope vector or value) actually differs on its two sides; cuts
where nothing changes — including stretches that ride along a switching
boundary — are discarded.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (Affine, GroupSort, Maxout, NetworkSpec, Pointwise, PWLU2D,
                   ValidationError, layer_piece)

KNOT_REL_TOL = 1e-9
_CUT_MERGE_REL = 1e-12
PATH_VERTEX = -1  # attribution sentinel for knots caused by a path bend


@dataclass(frozen=True)
class PolygonalPath:
    """Piecewise-straight path, parameterized by arc length (unit speed)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValidationError("a path needs at least two vertices")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise ValidationError("consecutive path vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def segment(cls, p0, p1) -> "PolygonalPath":
        return cls(np.stack([np.atleast_1d(np.asarray(p0, dtype=float)),
                             np.atleast_1d(np.asarray(p1, dtype=float))]))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())


@dataclass(frozen=True)
class KnotReport:
    knot_params: tuple         # sorted global arc-length parameters
    layers: tuple              # introducing layer index per knot (PATH_VERTEX at bends)
    at_vertex: tuple           # True where the knot sits on a path vertex
    count: int
    length: float
    density: float
    prefix_counts: Optional[tuple] = None  # knot count after each layer prefix


# ---------------------------------------------------------------------------
# Per-segment propagation
# ---------------------------------------------------------------------------

def _interval_roots(lo: float, hi: float, P: float, Q: float,
                    levels: np.ndarray, margin: float) -> list[float]:
    """Parameters strictly inside (lo, hi) where Q + P*s crosses a level."""
    if abs(P) < 1e-300:
        return []
    roots = (levels - Q) / P
    return [float(r) for r in roots if lo + margin < r < hi - margin]


def _layer_cuts(layer, cuts: np.ndarray, P: np.ndarray, Q: np.ndarray,
                margin: float) -> list[float]:
    """All switching parameters of one layer given per-interval profiles."""
    out: list[float] = []
    n_int = len(cuts) - 1
    for i in range(n_int):
        lo, hi = cuts[i], cuts[i + 1]
        p, q = P[i], Q[i]
        if isinstance(layer, Pointwise):
            for k, f in enumerate(layer.units):
                if f.breakpoints:
                    out.extend(_interval_roots(lo, hi, p[k], q[k],
                                               np.array(f.breakpoints), margin))
        elif isinstance(layer, Maxout):
            for u in range(layer.weights.shape[0]):
                W, o = layer.weights[u], layer.offsets[u]
                a = W @ p
                b = W @ q + o
                for ii in range(layer.rank):
                    for jj in range(ii + 1, layer.rank):
                        da = a[ii] - a[jj]
                        if abs(da) < 1e-300:
                            continue
                        r = (b[jj] - b[ii]) / da
                        if lo + margin < r < hi - margin:
                            out.append(float(r))
        elif isinstance(layer, GroupSort):
            g = layer.group_size
            for start in range(0, len(p), g):
                for ii in range(start, start + g):
                    for jj in range(ii + 1, start + g):
                        da = p[ii] - p[jj]
                        if abs(da) < 1e-300:
                            continue
                        r = (q[jj] - q[ii]) / da
                        if lo + margin < r < hi - margin:
                            out.append(float(r))
        elif isinstance(layer, PWLU2D):
            m = layer.grid_m
            h = layer.grid_step
            nodes = np.array([layer.grid_node(i) for i in range(m)])
            diag_levels = np.array([k * h for k in range(-(m - 2), m - 1)])
            for rmap in layer.readins:
                ap = rmap.matrix @ p
                aq = rmap.matrix @ q + rmap.offset
                out.extend(_interval_roots(lo, hi, ap[0], aq[0], nodes, margin))
                out.extend(_interval_roots(lo, hi, ap[1], aq[1], nodes, margin))
                out.extend(_interval_roots(lo, hi, ap[0] - ap[1], aq[0] - aq[1],
                                           diag_levels, margin))
    return out


def _refine(cuts: np.ndarray, P: np.ndarray, Q: np.ndarray,
            new_cuts: Sequence[float], merge_tol: float):
    """Insert cut points; sub-intervals inherit the parent profile. Returns
    (cuts, P, Q, inserted) with inserted the deduplicated new parameters."""
    inserted = []
    for s in sorted(new_cuts):
        j = bisect_right(cuts, s)
        near_prev = s - cuts[j - 1] <= merge_tol
        near_next = j < len(cuts) and cuts[j] - s <= merge_tol
        if near_prev or near_next:
            continue
        cuts = np.insert(cuts, j, s)
        P = np.insert(P, j - 1, P[j - 1], axis=0)
        Q = np.insert(Q, j - 1, Q[j - 1], axis=0)
        inserted.append(s)
    return cuts, P, Q, inserted


def _apply_layer(layer, cuts: np.ndarray, P: np.ndarray, Q: np.ndarray):
    """Select the active piece of ``layer`` on each interval at its midpoint
    and compose it with the interval's profile."""
    mids = (cuts[:-1] + cuts[1:]) / 2.0
    P2, Q2 = [], []
    for i, s in enumerate(mids):
        z = Q[i] + P[i] * s
        S, c = layer_piece(layer, z, dz=P[i])
        P2.append(S @ P[i])
        Q2.append(S @ Q[i] + c)
    return np.array(P2), np.array(Q2)


@dataclass
class _SegmentTrace:
    length: float
    # Per layer: (cuts, P, Q) AFTER that layer was applied.
    states: list
    cut_layer: dict  # parameter -> index of the layer that introduced it


def _propagate_segment(net: NetworkSpec, p0: np.ndarray, p1: np.ndarray) -> _SegmentTrace:
    L = float(np.linalg.norm(p1 - p0))
    u = (p1 - p0) / L
    cuts = np.array([0.0, L])
    P = np.array([u])
    Q = np.array([p0])
    merge_tol = _CUT_MERGE_REL * max(1.0, L)
    states = []
    cut_layer: dict = {}
    for li, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            P = P @ layer.map.matrix.T
            Q = Q @ layer.map.matrix.T + layer.map.offset
        else:
            new = _layer_cuts(layer, cuts, P, Q, merge_tol)
            cuts, P, Q, inserted = _refine(cuts, P, Q, new, merge_tol)
            for s in inserted:
                cut_layer[s] = li
            P, Q = _apply_layer(layer, cuts, P, Q)
        states.append((cuts.copy(), P.copy(), Q.copy()))
    return _SegmentTrace(L, states, cut_layer)


def _piece_changes(cuts: np.ndarray, P: np.ndarray, Q: np.ndarray,
                   tol: float) -> list[int]:
    """Indices i of interior cuts where the restricted piece differs between
    intervals i and i+1 (slope vector or value at the cut)."""
    out = []
    for i in range(len(cuts) - 2):
        s = cuts[i + 1]
        dp = np.abs(P[i] - P[i + 1]).max() if P.shape[1] else 0.0
        scale_p = max(1.0, np.abs(P[i]).max(initial=0.0), np.abs(P[i + 1]).max(initial=0.0))
        vl = Q[i] + P[i] * s
        vr = Q[i + 1] + P[i + 1] * s
        dv = np.abs(vl - vr).max() if P.shape[1] else 0.0
        scale_v = max(1.0, np.abs(vl).max(initial=0.0), np.abs(vr).max(initial=0.0))
        if dp > tol * scale_p or dv > tol * scale_v:
            out.append(i)
    return out


def _vertex_knot(left_state, right_state, tol: float) -> bool:
    """Piece change across a path vertex: compare the last piece of the
    incoming segment with the first piece of the outgoing one (slopes are both
    per unit arc length)."""
    cuts_l, P_l, Q_l = left_state
    cuts_r, P_r, Q_r = right_state
    pl, pr = P_l[-1], P_r[0]
    dp = np.abs(pl - pr).max() if pl.size else 0.0
    scale = max(1.0, np.abs(pl).max(initial=0.0), np.abs(pr).max(initial=0.0))
    return dp > tol * scale


def count_knots(net: NetworkSpec, path: PolygonalPath, tol: float = KNOT_REL_TOL,
                prefixes: bool = False) -> KnotReport:
    """Exact knots of the network restricted to the path.

    Knots strictly inside a segment come from layer switching; knots at path
    vertices (direction changes) are flagged ``at_vertex`` and attributed to
    the earlier segment with layer ``PATH_VERTEX``. ``prefixes=True``
    additionally reports the knot count of every depth-truncated network.
    """
    if path.dim != net.input_dim:
        raise ValidationError("path dimension must match the network input")
    traces = [_propagate_segment(net, path.vertices[i], path.vertices[i + 1])
              for i in range(len(path.vertices) - 1)]
    offsets = np.concatenate([[0.0], np.cumsum([t.length for t in traces])])
    params, layers_attr, at_vertex = [], [], []
    for si, tr in enumerate(traces):
        cuts, P, Q = tr.states[-1]
        for i in _piece_changes(cuts, P, Q, tol):
            s = cuts[i + 1]
            params.append(offsets[si] + s)
            layers_attr.append(tr.cut_layer.get(s, PATH_VERTEX))
            at_vertex.append(False)
    for si in range(len(traces) - 1):
        if _vertex_knot(traces[si].states[-1], traces[si + 1].states[-1], tol):
            params.append(offsets[si + 1])
            layers_attr.append(PATH_VERTEX)
            at_vertex.append(True)
    order = np.argsort(params, kind="stable")
    params = [float(params[i]) for i in order]
    layers_attr = [int(layers_attr[i]) for i in order]
    at_vertex = [bool(at_vertex[i]) for i in order]
    length = path.length
    prefix_counts = None
    if prefixes:
        prefix_counts = []
        for li in range(len(net.layers)):
            kt = 0
            for tr in traces:
                cuts, P, Q = tr.states[li]
                kt += len(_piece_changes(cuts, P, Q, tol))
            for si in range(len(traces) - 1):
                if _vertex_knot(traces[si].states[li], traces[si + 1].states[li], tol):
                    kt += 1
            prefix_counts.append(kt)
        prefix_counts = tuple(prefix_counts)
    kt = len(params)
    return KnotReport(tuple(params), tuple(layers_attr), tuple(at_vertex),
                      kt, length, kt / length, prefix_counts)


# ---------------------------------------------------------------------------
# Image paths and lengths
# ---------------------------------------------------------------------------

def image_path(net: NetworkSpec, path: PolygonalPath) -> PolygonalPath:
    """The image polyline: the network maps each segment to a polyline with
    vertices at the restriction's cut parameters."""
    verts = []
    for i in range(len(path.vertices) - 1):
        tr = _propagate_segment(net, path.vertices[i], path.vertices[i + 1])
        cuts, P, Q = tr.states[-1]
        for j in range(len(cuts) - 1):
            verts.append(Q[j] + P[j] * cuts[j])
        verts.append(Q[-1] + P[-1] * cuts[-1])
    out = [verts[0]]
    for v in verts[1:]:
        if not np.array_equal(v, out[-1]):
            out.append(v)
    if len(out) < 2:
        raise ValidationError("image path degenerates to a point")
    return PolygonalPath(np.array(out))


def image_length(net: NetworkSpec, path: PolygonalPath) -> float:
    """Arc length of the image polyline (0 when the image is a point)."""
    total = 0.0
    for i in range(len(path.vertices) - 1):
        tr = _propagate_segment(net, path.vertices[i], path.vertices[i + 1])
        cuts, P, Q = tr.states[-1]
        widths = np.diff(cuts)
        total += float(np.sum(np.linalg.norm(P, axis=1) * widths))
    return total


# ---------------------------------------------------------------------------
# Density inequality checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    passed: bool
    lhs: float
    rhs: float
    detail: dict

    def __str__(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}: {self.lhs:.6g} <= {self.rhs:.6g}"


def check_subadditivity(f1: NetworkSpec, f2: NetworkSpec,
                        path: PolygonalPath) -> InequalityReport:
    """Knot density of the sum and of the stacked pair against the sum of the
    individual densities. Counts are exact integers, so the density comparison
    is an exact integer comparison scaled by the common path length."""
    if f1.input_dim != f2.input_dim:
        raise ValidationError("summands need matching input dimensions")
    if f1.output_dim != f2.output_dim:
        raise ValidationError("summands need matching output dimensions")
    kt1 = count_knots(f1, path).count
    kt2 = count_knots(f2, path).count
    stacked = _stack_networks(f1, f2)
    kt_stack = count_knots(stacked, path).count
    summed = _sum_networks(f1, f2)
    kt_sum = count_knots(summed, path).count
    length = path.length
    passed = kt_sum <= kt1 + kt2 and kt_stack <= kt1 + kt2
    return InequalityReport(passed, max(kt_sum, kt_stack) / length,
                            (kt1 + kt2) / length,
                            {"kt_sum": kt_sum, "kt_stack": kt_stack,
                             "kt1": kt1, "kt2": kt2})


def _alternating_blocks(net: NetworkSpec):
    """Normalize an affine/pointwise network to blocks (affine, pointwise)*
    plus a trailing affine, merging consecutive affines."""
    from .core import AffineMap as _AM, identity_unit
    d = net.input_dim
    M = np.eye(d)
    o = np.zeros(d)
    blocks = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            o = layer.map.matrix @ o + layer.map.offset
            M = layer.map.matrix @ M
        elif isinstance(layer, Pointwise):
            blocks.append((_AM(M, o), layer))
            w = layer.out_dim(M.shape[0])
            M = np.eye(w)
            o = np.zeros(w)
        else:
            raise ValidationError("stacking supports affine and pointwise layers only")
    return blocks, _AM(M, o)


def _stack_networks(f1: NetworkSpec, f2: NetworkSpec) -> NetworkSpec:
    """(f1, f2) as one network: shared input, block-diagonal inner layers."""
    from .core import AffineMap as _AM, identity_unit
    d = f1.input_dim
    b1, tail1 = _alternating_blocks(f1)
    b2, tail2 = _alternating_blocks(f2)
    # Pad the shorter block list with identity blocks.
    def pad(blocks, tail, n):
        blocks = list(blocks)
        while len(blocks) < n:
            w = tail.in_dim
            blocks.append((_AM(np.eye(w), np.zeros(w)),
                           Pointwise((identity_unit(),) * w)))
        return blocks
    n = max(len(b1), len(b2))
    b1 = pad(b1, tail1, n)
    b2 = pad(b2, tail2, n)
    layers: list = []
    for i, ((a1, p1), (a2, p2)) in enumerate(zip(b1, b2)):
        if i == 0:
            M = np.vstack([a1.matrix, a2.matrix])
        else:
            M = np.block([[a1.matrix, np.zeros((a1.out_dim, a2.in_dim))],
                          [np.zeros((a2.out_dim, a1.in_dim)), a2.matrix]])
        layers.append(Affine(_AM(M, np.concatenate([a1.offset, a2.offset]))))
        layers.append(Pointwise(p1.units + p2.units))
    if n == 0:
        M = np.vstack([tail1.matrix, tail2.matrix])
    else:
        M = np.block([[tail1.matrix, np.zeros((tail1.out_dim, tail2.in_dim))],
                      [np.zeros((tail2.out_dim, tail1.in_dim)), tail2.matrix]])
    layers.append(Affine(_AM(M, np.concatenate([tail1.offset, tail2.offset]))))
    return NetworkSpec(d, tuple(layers))


def _sum_networks(f1: NetworkSpec, f2: NetworkSpec) -> NetworkSpec:
    from .core import AffineMap as _AM
    stacked = _stack_networks(f1, f2)
    k = f1.output_dim
    M = np.hstack([np.eye(k), np.eye(k)])
    return NetworkSpec(f1.input_dim,
                       stacked.layers + (Affine(_AM(M, np.zeros(k))),))


def check_composition_bound(f1: NetworkSpec, f2: NetworkSpec,
                            path: PolygonalPath) -> InequalityReport:
    """Composition density bound: the knots of f2(f1(.)) along the path are at
    most the knots of f1 along the path plus the knots of f2 along the image
    polyline — an exact integer comparison.

    Dividing by the path length gives the density form: the f2 term picks up
    the length ratio |f1(path)| / |path| as its change-of-measure factor.
    """
    from .core import compose
    if f2.input_dim != f1.output_dim:
        raise ValidationError("f2 must accept f1's output")
    comp = compose(f1, f2)
    kt_comp = count_knots(comp, path).count
    kt1 = count_knots(f1, path).count
    img_len = image_length(f1, path)
    if img_len > 1e-300:
        img = image_path(f1, path)
        kt2 = count_knots(f2, img).count
        lam2 = kt2 / img.length
    else:
        kt2, lam2 = 0, 0.0
    length = path.length
    passed = kt_comp <= kt1 + kt2
    detail = {"kt_comp": kt_comp, "kt1": kt1, "kt2_on_image": kt2,
              "image_length": img_len,
              "rhs_density": kt1 / length + (img_len / length) * lam2 if img_len > 1e-300
              else kt1 / length}
    return InequalityReport(passed, kt_comp / length, kt1 / length +
                            (kt2 / length), detail)
