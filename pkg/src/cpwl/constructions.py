"""Extremal network constructions that attain the region-count lower bounds.

Three families: sawtooth functions/networks (compositional lower bound),
general-position parallel-class arrangements (arrangement bound sharpness),
and base-m slope sums (sum/vectorization sharpness).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bounds import AlphaReport, ArchitectureDescriptor, ChannelAssignment, alpha_report
from .core import (Affine, AffineMap, NetworkSpec, Pointwise, ScalarCPWL,
                   ValidationError, eval_scalar, sum_scalar, zero_unit)

MAX_REDRAWS = 50
DIRECTION_TOL = 1e-6


def sawtooth(p: int) -> ScalarCPWL:
    """Order-``p`` sawtooth: knots at k/p, values alternating 0,1,0,... on the
    grid (1 at odd multiples), affine with slope ``±p`` outside [0, 1].
    ``p`` linear regions; sawtooth(1) is the identity."""
    if p < 1:
        raise ValidationError("sawtooth order must be >= 1")
    if p == 1:
        return ScalarCPWL((), (1.0,), 0.0)
    breakpoints = tuple(k / p for k in range(1, p))
    slopes = tuple(float(p) if k % 2 == 0 else -float(p) for k in range(p))
    return ScalarCPWL(breakpoints, slopes, anchor_value=1.0)


def sawtooth_decompose(p: int) -> tuple[list[ScalarCPWL], ScalarCPWL]:
    """Write sawtooth(p) as ``p - 1`` one-knot terms plus an affine remainder.

    Term k is ``c_k |t - k/p|`` with ``c_k = p (-1)^k`` (the slope jump of the
    sawtooth at k/p is ``2 p (-1)^k``); the remainder is affine with slope
    ``p`` for odd p and ``0`` for even p. The sum of all returned functions is
    re-summed and checked against sawtooth(p) before returning.
    """
    if p < 1:
        raise ValidationError("sawtooth order must be >= 1")
    target = sawtooth(p)
    terms = []
    for k in range(1, p):
        c = p * (-1) ** k
        terms.append(ScalarCPWL((k / p,), (-float(c), float(c)), 0.0))
    # Affine remainder in closed form (exact small integers):
    # slope = p + sum c_k * (-1) = p for odd p, 0 for even p;
    # value at 0 = -sum c_k * k/p = -(p-1)/2 for odd p, p/2 for even p.
    slope_r = float(p if p % 2 else 0)
    r0 = float(-(p - 1) // 2 if p % 2 else p // 2)
    remainder = ScalarCPWL((), (slope_r,), r0)
    total = remainder
    for f in terms:
        total = sum_scalar(total, f)
    if total.breakpoints != target.breakpoints or total.slopes != target.slopes \
            or abs(total.anchor_value - target.anchor_value) > 1e-9:
        raise AssertionError(f"sawtooth decomposition failed certification for p={p}")
    return terms, remainder


@dataclass(frozen=True)
class SawtoothPlan:
    """Resolved layout of a sawtooth network: per layer, per channel, the
    sawtooth order realized on that channel."""

    d_star: int
    assignment: ChannelAssignment
    orders: tuple[tuple[int, ...], ...]  # per layer, per channel

    @property
    def cell_count(self) -> int:
        return math.prod(q for row in self.orders for q in row)


def _plan(arch: ArchitectureDescriptor, assignment: ChannelAssignment) -> SawtoothPlan:
    orders = []
    for l, row in enumerate(arch.kappas):
        tau = assignment.per_layer[l]
        per_channel = [1] * assignment.d_star
        for k, kap in enumerate(row):
            per_channel[tau[k]] += kap - 1
        orders.append(tuple(per_channel))
    return SawtoothPlan(assignment.d_star, assignment, tuple(orders))


def sawtooth_network(arch: ArchitectureDescriptor,
                     tau: ChannelAssignment | None = None) -> NetworkSpec:
    """Network attaining the constructive channel-product lower bound.

    ``d* = min(dims)`` input coordinates are threaded as independent channels.
    Layer ``l`` first applies an affine map that (a) re-collects each channel
    by summing the units assigned to it in the previous layer and (b) copies
    channel ``tau_l(k)`` to unit ``k``; the pointwise stage gives unit ``k``
    exactly ``kappa_{l,k} - 1`` one-knot terms from the decomposition of the
    channel's sawtooth (one unit per channel also carries the affine
    remainder), so the channel units sum back to the full sawtooth. Each
    channel r then computes a sawtooth chain of order ``prod_l p_{l,r}`` and
    the exact cell count is the product of all per-layer per-channel orders,
    which equals ``alpha_lower_constructive(arch)`` when ``tau`` is the
    maximizing assignment (the default).
    """
    if arch.family in ("maxout", "groupsort", "pwlu"):
        raise ValidationError(f"sawtooth network needs a pointwise family, got {arch.family}")
    if tau is None:
        tau = alpha_report(arch).constructive_assignment
    if tau.d_star != arch.d_star or len(tau.per_layer) != arch.depth:
        raise ValidationError("assignment shape does not match the descriptor")
    for l, t in enumerate(tau.per_layer):
        if set(t) != set(range(arch.d_star)):
            raise ValidationError(
                f"layer {l}: every channel needs at least one unit to thread through")
    plan = _plan(arch, tau)
    d_star = plan.d_star
    dims = arch.dims
    layers: list = []
    for l, row in enumerate(arch.kappas):
        width = dims[l + 1]
        t = tau.per_layer[l]
        if any(r < 0 or r >= d_star for r in t) or len(t) != width:
            raise ValidationError(f"layer {l}: assignment does not map {width} units into {d_star} channels")
        # Channel collector: layer input -> d_star channel values.
        if l == 0:
            U = np.zeros((d_star, dims[0]))
            for r in range(d_star):
                U[r, r] = 1.0
        else:
            U = np.zeros((d_star, dims[l]))
            prev = tau.per_layer[l - 1]
            for k, r in enumerate(prev):
                U[r, k] = 1.0
        # Fan-out: unit k reads channel t[k].
        V = np.zeros((width, d_star))
        for k, r in enumerate(t):
            V[k, r] = 1.0
        layers.append(Affine(AffineMap(V @ U, np.zeros(width))))
        # Distribute each channel's sawtooth decomposition over its units.
        units: list[ScalarCPWL] = [zero_unit()] * width
        for r in range(d_star):
            members = [k for k in range(width) if t[k] == r]
            order = plan.orders[l][r]
            terms, remainder = sawtooth_decompose(order)
            pos = 0
            for j, k in enumerate(members):
                take = row[k] - 1
                unit = remainder if j == 0 else zero_unit()
                for f in terms[pos:pos + take]:
                    unit = sum_scalar(unit, f)
                pos += take
                units[k] = unit
        layers.append(Pointwise(tuple(units)))
    return NetworkSpec(dims[0], tuple(layers), metadata="sawtooth_network")


def sawtooth_network_plan(arch: ArchitectureDescriptor,
                          tau: ChannelAssignment | None = None) -> SawtoothPlan:
    """The per-channel sawtooth orders the construction realizes."""
    if tau is None:
        tau = alpha_report(arch).constructive_assignment
    return _plan(arch, tau)


def _unit_directions(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    vs = rng.standard_normal((n, d))
    return vs / np.linalg.norm(vs, axis=1, keepdims=True)


def _in_general_position(dirs: np.ndarray, d: int) -> bool:
    """Every subset of up to min(d, N) directions has full rank (smallest
    singular value above tolerance); covers pairwise non-parallelism at k=2."""
    n = dirs.shape[0]
    for k in range(2, min(d, n) + 1):
        for idx in itertools.combinations(range(n), k):
            sv = np.linalg.svd(dirs[list(idx)], compute_uv=False)
            if sv[-1] <= DIRECTION_TOL:
                return False
    return True


def _generic_scalar(n_regions: int, rng: np.random.Generator) -> ScalarCPWL:
    """A 1D unit with ``n_regions - 1`` generic distinct knots and strictly
    increasing slopes (adjacent slopes always differ)."""
    m = n_regions - 1
    if m == 0:
        return ScalarCPWL((), (1.0,), 0.0)
    while True:
        bp = np.sort(rng.uniform(-1.0, 1.0, size=m))
        if m == 1 or np.min(np.diff(bp)) > 1e-3:
            break
    slopes = tuple(float(s) for s in range(n_regions))
    return ScalarCPWL(tuple(float(t) for t in bp), slopes, 0.0)


def general_position_partitions(d: int, ns, seed: int = 0) -> NetworkSpec:
    """One-hidden-layer vectorized net whose unit k applies an
    ``n_k``-region 1D unit to ``w_k . x`` with directions in general position;
    its exact cell count is ``beta(d, ns)``."""
    ns = [int(n) for n in ns]
    if d < 1 or any(n < 1 for n in ns):
        raise ValidationError("need d >= 1 and all region counts >= 1")
    rng = np.random.default_rng(np.random.Philox(key=[seed, 0x67656e65]))
    for _ in range(MAX_REDRAWS):
        dirs = _unit_directions(d, len(ns), rng)
        if d == 1 or _in_general_position(dirs, d):
            break
    else:
        raise ValidationError("could not reach general position after max redraws")
    units = tuple(_generic_scalar(n, rng) for n in ns)
    layers = (Affine(AffineMap(dirs, np.zeros(len(ns)))), Pointwise(units))
    return NetworkSpec(d, layers, metadata="general_position_partitions")


def extremal_sum_network(d: int, ns, seed: int = 0) -> NetworkSpec:
    """Scalar net summing N generic-position units whose slopes follow the
    base-m digit trick ``a_k^p = p * m^(k-1)`` with ``m = max(ns)``, so every
    arrangement cell carries a distinct total slope:
    ``distinct_piece_count = beta(d, ns)``."""
    ns = [int(n) for n in ns]
    if d < 1 or any(n < 1 for n in ns):
        raise ValidationError("need d >= 1 and all region counts >= 1")
    base = general_position_partitions(d, ns, seed=seed)
    m = max(ns)
    rng = np.random.default_rng(np.random.Philox(key=[seed, 0x7375436f]))
    units = []
    for k, n in enumerate(ns):
        old = base.layers[1].units[k]
        slopes = tuple(float(p * m ** k) for p in range(1, n + 1))
        bp = old.breakpoints
        anchor = float(rng.uniform(-0.5, 0.5))
        units.append(ScalarCPWL(bp, slopes, anchor))
    summed = Affine(AffineMap(np.ones((1, len(ns))), np.zeros(1)))
    layers = (base.layers[0], Pointwise(tuple(units)), summed)
    return NetworkSpec(d, layers, metadata="extremal_sum_network")
