"""Analytic parameter and FLOP accounting for genomes.

The model treats every conv unit as a k x k kernel applied at each
spatial site, with a multiply-add counted as 2 FLOPs:

    conv   flops = 2 * c_src * c_dst * k^2 * sites / groups
    dwconv flops = 2 * c * k^2 * sites
    resid  flops = c_dst * sites

Parameter counts mirror the same shapes (grouped convs divide the
cross-channel fan-in); biases and per-layer normalization scales add
``c_dst`` each and their FLOPs are ignored.  Recursion multiplies a
layer's FLOPs by its depth while leaving parameters unchanged, because
repeated applications share one weight set.

Accounting covers the searchable layers only.  The fixed input stem and
output head are deliberately outside the report so that per-layer rows
sum exactly to the totals and so that doubling every searched width
scales weight parameters and conv FLOPs by exactly 4.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import GenomeError
from .space import (
    ArchitectureGenome,
    OperatorKind,
    SupernetSpec,
    UnitSpec,
    validate_genome,
)


@dataclass(frozen=True)
class LayerCost:
    layer: int
    params: int
    flops: int


@dataclass(frozen=True)
class CostReport:
    """Totals plus a per-layer breakdown that sums exactly to them."""

    params: int
    flops: int
    per_layer: tuple[LayerCost, ...]

    def to_record(self) -> str:
        rows = ";".join(f"{c.layer}:{c.params}:{c.flops}" for c in self.per_layer)
        return f"params={self.params} flops={self.flops} layers={rows}"


def _width(tag: str, c_in: int, c_out: int) -> int:
    if tag == "in":
        return c_in
    if tag == "out":
        return c_out
    if tag == "mid":
        return max(1, -(-c_out // 2))  # ceil(c_out / 2)
    raise ValueError(f"unknown width tag {tag!r}")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def unit_cost(
    unit: UnitSpec, c_in: int, c_out: int, sites: int, include_affine: bool
) -> tuple[int, int]:
    """(params, flops) of one primitive unit at the given widths."""
    src = _width(unit.src, c_in, c_out)
    dst = _width(unit.dst, c_in, c_out)
    if unit.kind == "conv":
        fan_in = _ceil_div(src, unit.groups)
        params = fan_in * dst * unit.kernel**2
        if include_affine:
            params += dst  # bias
        flops = 2 * fan_in * dst * unit.kernel**2 * sites
        return params, flops
    if unit.kind == "dwconv":
        params = src * unit.kernel**2
        if include_affine:
            params += src
        flops = 2 * src * unit.kernel**2 * sites
        return params, flops
    if unit.kind == "residual":
        return 0, dst * sites
    raise ValueError(f"unknown unit kind {unit.kind!r}")


def operator_cost(
    op: OperatorKind,
    c_in: int,
    c_out: int,
    sites: int,
    recursion: int = 1,
    include_affine: bool = True,
) -> tuple[int, int]:
    """(params, flops) for one layer running ``op`` at the given widths.

    ``recursion`` scales FLOPs only: repeats reuse the block's weights.
    """
    params = 0
    flops = 0
    for unit in op.units:
        p, f = unit_cost(unit, c_in, c_out, sites, include_affine)
        params += p
        flops += f
    return params, flops * recursion


def genome_cost(
    spec: SupernetSpec,
    genome: ArchitectureGenome,
    include_affine: bool = True,
) -> CostReport:
    """Cost report for a genome over ``spec``.

    Layer l maps the previous layer's width to its own; the first layer
    runs at its own width on both sides (the stem has already projected
    the input there).  Spatial sites come from the path's resolution
    schedule applied to ``spec.input_sites``.  ``include_affine`` counts
    biases and normalization scales; switch it off for pure weight
    accounting.
    """
    verdict = validate_genome(spec, genome)
    if not verdict.ok:
        raise GenomeError(f"cannot cost invalid genome: {verdict.reason}")
    path = spec.paths[genome.path_index]
    rows: list[LayerCost] = []
    total_params = 0
    total_flops = 0
    prev_width = spec.channel_choices[genome.channel_assignment[0]]
    for l, layer in enumerate(path.layers):
        width = spec.channel_choices[genome.channel_assignment[l]]
        op = layer.operator_candidates[genome.operator_assignment[l]]
        depth = layer.recursion_choices[genome.recursion_assignment[l]]
        sites = spec.sites(genome.path_index, l)
        params, flops = operator_cost(op, prev_width, width, sites, depth, include_affine)
        if include_affine:
            params += width  # normalization scale vector
        rows.append(LayerCost(layer=l, params=params, flops=flops))
        total_params += params
        total_flops += flops
        prev_width = width
    return CostReport(params=total_params, flops=total_flops, per_layer=tuple(rows))


def satisfies_constraints(report: CostReport, params_limit: int, flops_limit: int) -> bool:
    """Strict feasibility: both totals must be under their limits.

    A genome exactly on a boundary is infeasible; the search treats the
    limits as open bounds.
    """
    return report.params < params_limit and report.flops < flops_limit
