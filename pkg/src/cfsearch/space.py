"""Search-space definition: supernet structure, genomes, and enumeration.

A supernet is a small set of candidate generator topologies ("paths"),
each a fixed-length chain of layers.  Every layer offers M candidate
operator blocks, a shared ladder of channel widths, and optionally a set
of recursion depths (how many times the block is applied with shared
weights).  A genome pins one choice per dimension and therefore names one
concrete sub-network.

Counting note: a layerwise *specialization* is an unordered set of M
assignments that are pairwise disjoint within every layer, i.e. per layer
the M assignments together use each candidate operator exactly once.  Two
member lists that differ only by reordering describe the same
specialization.  The number of distinct specializations for M operators
and L layers is (M!)**(L-1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .errors import ConfigError, EnumerationTooLargeError, GenomeError

# Exhaustive specialization enumeration refuses to build more than this
# many candidate tuples unless the caller raises the cap explicitly.
DEFAULT_ENUMERATION_CAP = 1_000_000

# Results of the closed-form count are kept within a signed 64-bit range
# so downstream accounting can treat counts as native integers.
_COUNT_LIMIT = 2**63


@dataclass(frozen=True)
class UnitSpec:
    """One primitive inside an operator block, for cost accounting.

    ``kind`` is "conv" (dense, cross-channel), "dwconv" (channelwise), or
    "residual" (skip addition).  ``src``/``dst`` name the channel widths
    the unit runs between: "in" is the block input width, "out" the block
    output width, "mid" a bottleneck at ceil(out / 2).  ``groups`` splits
    a conv into independent channel groups.
    """

    kind: str
    kernel: int = 1
    groups: int = 1
    src: str = "in"
    dst: str = "out"


@dataclass(frozen=True)
class OperatorKind:
    """A candidate block type: a name plus its cost-bearing unit list."""

    name: str
    units: tuple[UnitSpec, ...]


def _conv(kernel: int, src: str, dst: str, groups: int = 1) -> UnitSpec:
    return UnitSpec(kind="conv", kernel=kernel, groups=groups, src=src, dst=dst)


OPERATOR_REGISTRY: Mapping[str, OperatorKind] = {
    op.name: op
    for op in (
        OperatorKind("conv3x3", (_conv(3, "in", "out"),)),
        OperatorKind(
            "res_block",
            (_conv(3, "in", "out"), _conv(3, "out", "out"), UnitSpec("residual", dst="out")),
        ),
        OperatorKind(
            "dws_block",
            (UnitSpec("dwconv", kernel=3, src="in", dst="in"), _conv(1, "in", "out")),
        ),
        OperatorKind(
            "group_res_block",
            (
                _conv(3, "in", "out", groups=2),
                _conv(3, "out", "out", groups=2),
                UnitSpec("residual", dst="out"),
            ),
        ),
        OperatorKind(
            "shrink_res_block",
            (_conv(3, "in", "mid"), _conv(3, "mid", "out"), UnitSpec("residual", dst="out")),
        ),
        OperatorKind(
            "context_res_block",
            (_conv(3, "in", "out"), _conv(1, "out", "out"), UnitSpec("residual", dst="out")),
        ),
    )
}


def operator_kind(name: str) -> OperatorKind:
    try:
        return OPERATOR_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(OPERATOR_REGISTRY))
        raise ConfigError(f"unknown operator kind {name!r}; known kinds: {known}") from None


@dataclass(frozen=True)
class LayerSpec:
    """One searchable layer: its candidate operators and recursion depths.

    ``recursion_choices`` is an ordered tuple of positive depths; a layer
    without an explicit set uses (1,), meaning the block runs once.
    """

    operator_candidates: tuple[OperatorKind, ...]
    recursion_choices: tuple[int, ...] = (1,)

    def __post_init__(self) -> None:
        if not self.operator_candidates:
            raise ConfigError("layer needs at least one operator candidate")
        names = [op.name for op in self.operator_candidates]
        if len(set(names)) != len(names):
            raise ConfigError(f"layer operator candidates must be distinct, got {names}")
        if not self.recursion_choices:
            raise ConfigError("recursion_choices must not be empty")
        if any(r < 1 for r in self.recursion_choices):
            raise ConfigError(f"recursion depths must be >= 1, got {self.recursion_choices}")
        if list(self.recursion_choices) != sorted(set(self.recursion_choices)):
            raise ConfigError(
                f"recursion_choices must be strictly increasing, got {self.recursion_choices}"
            )

    @property
    def num_operators(self) -> int:
        return len(self.operator_candidates)


@dataclass(frozen=True)
class PathSpec:
    """One candidate generator topology.

    ``resolution_schedule`` holds, per layer, the spatial site count of
    that layer's output relative to the network input (a power of two, so
    stages either keep the extent or scale it by 2**k).
    ``matched_discriminator_path`` is the index of the discriminator this
    path trains against; it is resolved at load time and must have an
    identical resolution schedule.
    """

    layers: tuple[LayerSpec, ...]
    resolution_schedule: tuple[Fraction, ...]
    matched_discriminator_path: int = 0

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("a path needs at least one layer")
        if len(self.resolution_schedule) != len(self.layers):
            raise ConfigError(
                "resolution_schedule length "
                f"{len(self.resolution_schedule)} != layer count {len(self.layers)}"
            )
        m = self.layers[0].num_operators
        for i, layer in enumerate(self.layers):
            if layer.num_operators != m:
                raise ConfigError(
                    f"every layer of a path must offer the same operator count; "
                    f"layer 0 has {m}, layer {i} has {layer.num_operators}"
                )
        for i, scale in enumerate(self.resolution_schedule):
            if not _is_power_of_two_fraction(scale):
                raise ConfigError(
                    f"resolution scale at layer {i} must be a power of two, got {scale}"
                )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_operators(self) -> int:
        return self.layers[0].num_operators


@dataclass(frozen=True)
class DiscriminatorSpec:
    """A discriminator topology.  Not searched; fixed width, fixed schedule."""

    resolution_schedule: tuple[Fraction, ...]
    width: int = 8


def _is_power_of_two_fraction(x: Fraction) -> bool:
    if x <= 0:
        return False
    num, den = x.numerator, x.denominator
    return (num == 1 or (num & (num - 1)) == 0) and (den == 1 or (den & (den - 1)) == 0)


@dataclass(frozen=True)
class SupernetSpec:
    """The whole search space: paths, channel ladder, discriminators."""

    paths: tuple[PathSpec, ...]
    channel_choices: tuple[int, ...]
    discriminators: tuple[DiscriminatorSpec, ...]
    input_channels: int = 1
    input_sites: int = 1

    def __post_init__(self) -> None:
        if not self.paths:
            raise ConfigError("spec needs at least one path")
        if not self.channel_choices:
            raise ConfigError("spec needs at least one channel choice")
        chans = list(self.channel_choices)
        if chans != sorted(set(chans)) or any(c < 1 for c in chans):
            raise ConfigError(
                f"channel_choices must be strictly increasing positive ints, got {chans}"
            )
        if self.input_channels < 1 or self.input_sites < 1:
            raise ConfigError("input_channels and input_sites must be positive")
        if not self.discriminators:
            raise ConfigError("spec needs at least one discriminator path")
        for p, path in enumerate(self.paths):
            d = path.matched_discriminator_path
            if not 0 <= d < len(self.discriminators):
                raise ConfigError(f"path {p} matched discriminator {d} out of range")
            if self.discriminators[d].resolution_schedule != path.resolution_schedule:
                raise ConfigError(
                    f"path {p} and discriminator {d} disagree on resolution schedule"
                )
        for p, path in enumerate(self.paths):
            for scale in path.resolution_schedule:
                if (scale * self.input_sites).denominator != 1:
                    raise ConfigError(
                        f"path {p}: scale {scale} does not divide input_sites "
                        f"{self.input_sites} into whole sites"
                    )

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def num_channel_choices(self) -> int:
        return len(self.channel_choices)

    @property
    def max_width(self) -> int:
        return self.channel_choices[-1]

    def sites(self, path_index: int, layer: int) -> int:
        """Spatial site count of a layer's output."""
        scale = self.paths[path_index].resolution_schedule[layer]
        return int(scale * self.input_sites)


@dataclass(frozen=True)
class ArchitectureGenome:
    """One point of the search space, stored as index tuples.

    ``recursion_assignment`` may be given as None, which normalizes to
    all-zero indices (depth 1 wherever a layer has no explicit choices).
    """

    path_index: int
    operator_assignment: tuple[int, ...]
    channel_assignment: tuple[int, ...]
    recursion_assignment: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.recursion_assignment is None or len(self.recursion_assignment) == 0:
            object.__setattr__(
                self, "recursion_assignment", tuple(0 for _ in self.operator_assignment)
            )

    def sort_key(self) -> tuple:
        """Canonical ordering used for every lexicographic tie-break."""
        return (
            self.path_index,
            self.operator_assignment,
            self.channel_assignment,
            self.recursion_assignment,
        )

    def to_record(self) -> str:
        """Serialize as ``path:<i>;ops:<i,..>;ch:<i,..>;rec:<i,..>``."""
        return (
            f"path:{self.path_index}"
            f";ops:{','.join(str(i) for i in self.operator_assignment)}"
            f";ch:{','.join(str(i) for i in self.channel_assignment)}"
            f";rec:{','.join(str(i) for i in self.recursion_assignment)}"
        )

    @staticmethod
    def from_record(record: str) -> "ArchitectureGenome":
        parts = record.strip().split(";")
        fields: dict[str, str] = {}
        for part in parts:
            if ":" not in part:
                raise GenomeError(f"malformed genome record segment {part!r}")
            key, value = part.split(":", 1)
            fields[key] = value
        for key in ("path", "ops", "ch", "rec"):
            if key not in fields:
                raise GenomeError(f"genome record missing {key!r} field: {record!r}")
        try:
            path = int(fields["path"])
            ops = tuple(int(v) for v in fields["ops"].split(",") if v != "")
            ch = tuple(int(v) for v in fields["ch"].split(",") if v != "")
            rec = tuple(int(v) for v in fields["rec"].split(",") if v != "")
        except ValueError as exc:
            raise GenomeError(f"non-integer value in genome record {record!r}") from exc
        return ArchitectureGenome(path, ops, ch, rec)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None


def validate_genome(spec: SupernetSpec, genome: ArchitectureGenome) -> ValidationResult:
    """Check a genome against a spec; reports the first violated constraint.

    Checks run in a fixed documented order: path index range, assignment
    lengths, operator index ranges, channel index ranges, recursion index
    ranges.
    """
    if not 0 <= genome.path_index < spec.num_paths:
        return ValidationResult(
            False, f"path_index {genome.path_index} outside [0, {spec.num_paths})"
        )
    path = spec.paths[genome.path_index]
    length = path.num_layers
    for name, assignment in (
        ("operator_assignment", genome.operator_assignment),
        ("channel_assignment", genome.channel_assignment),
        ("recursion_assignment", genome.recursion_assignment),
    ):
        if len(assignment) != length:
            return ValidationResult(
                False, f"{name} length {len(assignment)} != layer count {length}"
            )
    for l, idx in enumerate(genome.operator_assignment):
        if not 0 <= idx < path.layers[l].num_operators:
            return ValidationResult(
                False,
                f"operator index {idx} at layer {l} outside "
                f"[0, {path.layers[l].num_operators})",
            )
    for l, idx in enumerate(genome.channel_assignment):
        if not 0 <= idx < spec.num_channel_choices:
            return ValidationResult(
                False,
                f"channel index {idx} at layer {l} outside [0, {spec.num_channel_choices})",
            )
    for l, idx in enumerate(genome.recursion_assignment):
        n = len(path.layers[l].recursion_choices)
        if not 0 <= idx < n:
            return ValidationResult(
                False, f"recursion index {idx} at layer {l} outside [0, {n})"
            )
    return ValidationResult(True, None)


def require_valid(spec: SupernetSpec, genome: ArchitectureGenome) -> None:
    verdict = validate_genome(spec, genome)
    if not verdict.ok:
        raise GenomeError(verdict.reason or "invalid genome")


def enumerate_paths(spec: SupernetSpec) -> list[int]:
    """Path indices in evaluation order."""
    return list(range(spec.num_paths))


def operator_specialization_count(num_operators: int, num_layers: int) -> int:
    """Closed-form count of layerwise specializations: (M!)**(L-1).

    Raises if arguments are non-positive or the result would leave the
    signed 64-bit range the call-count bookkeeping assumes.
    """
    if num_operators < 1 or num_layers < 1:
        raise ConfigError(
            f"need num_operators >= 1 and num_layers >= 1, "
            f"got ({num_operators}, {num_layers})"
        )
    count = math.factorial(num_operators) ** (num_layers - 1)
    if count >= _COUNT_LIMIT:
        raise EnumerationTooLargeError(
            f"specialization count (M={num_operators}, L={num_layers}) exceeds "
            f"the 64-bit bookkeeping range; reduce M or L"
        )
    return count


def enumerate_specializations(
    num_operators: int,
    num_layers: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[tuple[tuple[int, ...], ...]]:
    """All distinct specializations, each as a sorted tuple of M assignments.

    A specialization is represented canonically: its member assignments
    (length-L operator index tuples) sorted lexicographically, and the
    returned list is itself in lexicographic order of those
    representations.  Construction fixes the first layer to the identity
    permutation, which selects exactly one representative per equivalence
    class; remaining layers range over all permutations.

    The brute-force search space this stands in for has (M!)**L ordered
    tuples; when that exceeds ``cap`` the call refuses and suggests either
    a smaller (M, L) or the sampled fallback of the operator-search stage.
    """
    if num_operators < 1 or num_layers < 1:
        raise ConfigError(
            f"need num_operators >= 1 and num_layers >= 1, "
            f"got ({num_operators}, {num_layers})"
        )
    space = math.factorial(num_operators) ** num_layers
    if space > cap:
        raise EnumerationTooLargeError(
            f"specialization space (M!)**L = {space} exceeds cap {cap}; "
            f"use a smaller (M, L) or enable sampled operator search"
        )
    first = tuple(range(num_operators))
    perms = list(itertools.permutations(range(num_operators)))
    out: list[tuple[tuple[int, ...], ...]] = []
    for rest in itertools.product(perms, repeat=num_layers - 1):
        columns = (first,) + rest
        members = tuple(
            tuple(columns[l][i] for l in range(num_layers)) for i in range(num_operators)
        )
        out.append(tuple(sorted(members)))
    out.sort()
    return out


def sample_specializations(
    num_operators: int,
    num_layers: int,
    count: int,
    rng,
) -> list[tuple[tuple[int, ...], ...]]:
    """Draw ``count`` distinct specializations without full enumeration.

    Fallback for spaces past the enumeration cap: draws random per-layer
    permutations, canonicalizes, dedupes.  Deterministic under the given
    generator.
    """
    seen: set[tuple[tuple[int, ...], ...]] = set()
    out: list[tuple[tuple[int, ...], ...]] = []
    total = operator_specialization_count(num_operators, num_layers)
    target = min(count, total)
    attempts = 0
    while len(out) < target and attempts < 1000 * target:
        attempts += 1
        columns = [tuple(rng.permutation(num_operators)) for _ in range(num_layers)]
        members = tuple(
            tuple(int(columns[l][i]) for l in range(num_layers))
            for i in range(num_operators)
        )
        canon = tuple(sorted(members))
        if canon not in seen:
            seen.add(canon)
            out.append(canon)
    return out


def enumerate_genomes(spec: SupernetSpec) -> Iterator[ArchitectureGenome]:
    """Every valid genome, in canonical lexicographic order."""
    for p, path in enumerate(spec.paths):
        length = path.num_layers
        op_ranges = [range(layer.num_operators) for layer in path.layers]
        rec_ranges = [range(len(layer.recursion_choices)) for layer in path.layers]
        ch_range = range(spec.num_channel_choices)
        for ops in itertools.product(*op_ranges):
            for ch in itertools.product(ch_range, repeat=length):
                for rec in itertools.product(*rec_ranges):
                    yield ArchitectureGenome(p, ops, ch, rec)


def genome_space_size(spec: SupernetSpec) -> int:
    total = 0
    for path in spec.paths:
        size = 1
        for layer in path.layers:
            size *= layer.num_operators * spec.num_channel_choices
            size *= len(layer.recursion_choices)
        total += size
    return total


def maximal_genome(spec: SupernetSpec, path_index: int) -> ArchitectureGenome:
    """Widest, deepest genome of a path with operator assignment all-zero."""
    path = spec.paths[path_index]
    length = path.num_layers
    return ArchitectureGenome(
        path_index,
        tuple(0 for _ in range(length)),
        tuple(spec.num_channel_choices - 1 for _ in range(length)),
        tuple(len(layer.recursion_choices) - 1 for layer in path.layers),
    )


def minimal_genome(spec: SupernetSpec, path_index: int) -> ArchitectureGenome:
    """Narrowest, shallowest genome of a path with operator assignment all-zero."""
    path = spec.paths[path_index]
    length = path.num_layers
    return ArchitectureGenome(
        path_index,
        tuple(0 for _ in range(length)),
        tuple(0 for _ in range(length)),
        tuple(0 for _ in range(length)),
    )


# -- configuration loading ---------------------------------------------------


def _parse_scale(raw) -> Fraction:
    try:
        if isinstance(raw, str):
            return Fraction(raw)
        return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad resolution scale {raw!r}") from exc


def spec_from_dict(cfg: Mapping) -> SupernetSpec:
    """Build a SupernetSpec from a parsed configuration mapping.

    Schema (see README for the full document)::

        input_channels: 2
        input_sites: 1
        channel_choices: [4, 6, 8]
        paths:
          - resolution_schedule: [1, 1]
            operators: [[conv3x3, res_block], [conv3x3, res_block]]
            recursion_choices: [[1], [1, 2]]      # optional
            matched_discriminator: 0              # optional
        discriminators:                           # optional; derived 1:1
          - resolution_schedule: [1, 1]
            width: 8

    When ``discriminators`` is omitted, one discriminator per generator
    path is derived with an identical schedule and the matching is the
    identity.  When discriminators are given but a path has no explicit
    ``matched_discriminator``, the path is matched to the lowest-index
    discriminator with an equal resolution schedule.
    """
    if not isinstance(cfg, Mapping):
        raise ConfigError("spec section must be a mapping")
    try:
        raw_paths = cfg["paths"]
        raw_channels = cfg["channel_choices"]
    except KeyError as exc:
        raise ConfigError(f"spec section missing required key {exc.args[0]!r}") from None
    if not isinstance(raw_paths, Sequence) or isinstance(raw_paths, (str, bytes)):
        raise ConfigError("spec 'paths' must be a list")

    parsed_paths = []
    for p, raw_path in enumerate(raw_paths):
        if "operators" not in raw_path or "resolution_schedule" not in raw_path:
            raise ConfigError(
                f"path {p} needs 'operators' and 'resolution_schedule' entries"
            )
        op_rows = raw_path["operators"]
        schedule = tuple(_parse_scale(s) for s in raw_path["resolution_schedule"])
        rec_rows = raw_path.get("recursion_choices")
        layers = []
        for l, row in enumerate(op_rows):
            if isinstance(row, str):
                raise ConfigError(f"path {p} layer {l}: operators must be a list of names")
            kinds = tuple(operator_kind(name) for name in row)
            if rec_rows is not None:
                rec = tuple(int(r) for r in rec_rows[l])
            else:
                rec = (1,)
            layers.append(LayerSpec(kinds, rec))
        parsed_paths.append(
            {
                "layers": tuple(layers),
                "schedule": schedule,
                "matched": raw_path.get("matched_discriminator"),
            }
        )

    raw_discs = cfg.get("discriminators")
    if raw_discs is None:
        discriminators = tuple(
            DiscriminatorSpec(resolution_schedule=p["schedule"]) for p in parsed_paths
        )
        for p, parsed in enumerate(parsed_paths):
            if parsed["matched"] is None:
                parsed["matched"] = p
    else:
        discriminators = tuple(
            DiscriminatorSpec(
                resolution_schedule=tuple(_parse_scale(s) for s in d["resolution_schedule"]),
                width=int(d.get("width", 8)),
            )
            for d in raw_discs
        )
        for p, parsed in enumerate(parsed_paths):
            if parsed["matched"] is None:
                matches = [
                    i
                    for i, d in enumerate(discriminators)
                    if d.resolution_schedule == parsed["schedule"]
                ]
                if not matches:
                    raise ConfigError(
                        f"no discriminator matches the resolution schedule of path {p}"
                    )
                parsed["matched"] = matches[0]

    paths = tuple(
        PathSpec(
            layers=parsed["layers"],
            resolution_schedule=parsed["schedule"],
            matched_discriminator_path=int(parsed["matched"]),
        )
        for parsed in parsed_paths
    )
    return SupernetSpec(
        paths=paths,
        channel_choices=tuple(int(c) for c in raw_channels),
        discriminators=discriminators,
        input_channels=int(cfg.get("input_channels", 1)),
        input_sites=int(cfg.get("input_sites", 1)),
    )


def load_spec(path: str) -> SupernetSpec:
    """Load a spec from a YAML file whose top level is the spec mapping."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if isinstance(data, Mapping) and "space" in data:
        data = data["space"]
    return spec_from_dict(data)
