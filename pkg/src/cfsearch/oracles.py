"""Fitness oracles: the shared evaluation interface, tabular landscapes
with known structure, and the adapter over trained supernets.

Every search stage talks to a ``FitnessOracle``: genome in, (fitness,
cost) out, with results cached by genome record so accounting can
distinguish lookups from actual evaluations.  Tabular landscapes store a
fitness for every genome of a small spec and exist so that search
behavior can be verified against exhaustively known optima; the GAN
adapter scores genomes on a pretrained supernet by weight inheritance.

All landscape rules produce strictly positive fitness, which keeps
"within x percent of the optimum" statements meaningful.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np

from .configs import default_toy_spec, evolution_bench_spec
from .costs import CostReport, genome_cost, satisfies_constraints
from .errors import ConfigError, InfeasibleError
from .space import (
    ArchitectureGenome,
    SupernetSpec,
    enumerate_genomes,
    genome_space_size,
    maximal_genome,
)
from .util import format_float

LANDSCAPE_SIZE_CAP = 100_000

NO_LIMIT = 10**18


@dataclass(frozen=True)
class OracleResult:
    fitness: float
    cost: CostReport


class FitnessOracle:
    """Base class: caching, call accounting, and cost delegation.

    ``genome_evaluations`` counts distinct genomes actually scored;
    ``path_evaluations`` counts distinct path-level scores.  Lookups that
    hit the cache are free.  Thread-safe for the bounded parallelism of
    stage evaluation.
    """

    def __init__(self, spec: SupernetSpec):
        self.spec = spec
        self._genome_cache: dict[str, OracleResult] = {}
        self._path_cache: dict[int, float] = {}
        self._lock = threading.Lock()
        self.lookups = 0

    @property
    def genome_evaluations(self) -> int:
        return len(self._genome_cache)

    @property
    def path_evaluations(self) -> int:
        return len(self._path_cache)

    def cached(self, genome: ArchitectureGenome) -> bool:
        """Whether ``evaluate`` would be a free cache hit."""
        with self._lock:
            return genome.to_record() in self._genome_cache

    def cache_snapshot(self) -> list[tuple[str, OracleResult]]:
        """Cached (record, result) pairs in first-evaluation order."""
        with self._lock:
            return list(self._genome_cache.items())

    def evaluate(self, genome: ArchitectureGenome) -> OracleResult:
        key = genome.to_record()
        with self._lock:
            self.lookups += 1
            hit = self._genome_cache.get(key)
        if hit is not None:
            return hit
        result = OracleResult(
            fitness=float(self._fitness(genome)), cost=self.cost(genome)
        )
        with self._lock:
            self._genome_cache.setdefault(key, result)
            return self._genome_cache[key]

    def path_score(self, path_index: int) -> float:
        with self._lock:
            if path_index in self._path_cache:
                return self._path_cache[path_index]
        value = float(self._path_fitness(path_index))
        with self._lock:
            self._path_cache.setdefault(path_index, value)
            return self._path_cache[path_index]

    def cost(self, genome: ArchitectureGenome) -> CostReport:
        return genome_cost(self.spec, genome)

    def _fitness(self, genome: ArchitectureGenome) -> float:
        raise NotImplementedError

    def _path_fitness(self, path_index: int) -> float:
        raise NotImplementedError


@dataclass
class TabularLandscape:
    """A complete genome -> fitness table over a small spec."""

    spec: SupernetSpec
    rule: str
    seed: int
    table: dict[str, float]

    def fitness(self, genome: ArchitectureGenome) -> float:
        return self.table[genome.to_record()]

    def size(self) -> int:
        return len(self.table)


LANDSCAPE_RULES = ("separable", "monotone_plateau", "random_seeded", "deceptive")


def build_landscape(spec: SupernetSpec, rule: str, seed: int) -> TabularLandscape:
    """Generate a landscape over every genome of ``spec``.

    Rules:

    * ``separable``: the fitness is a sum of independent per-dimension
      utilities, so the global argmax is the composition of per-dimension
      argmaxes.
    * ``monotone_plateau``: fitness increases with every channel index up
      to a plateau over the top two choices; rewards search that widens
      channels but cannot distinguish the plateau by greed alone.
    * ``random_seeded``: independent uniform fitness per genome.
    * ``deceptive``: a broad local optimum at narrow channels (93 percent
      of the global value) with the global optimum at the widest corner
      and a fitness valley between them.
    """
    if rule not in LANDSCAPE_RULES:
        raise ConfigError(f"unknown landscape rule {rule!r}; known: {LANDSCAPE_RULES}")
    size = genome_space_size(spec)
    if size > LANDSCAPE_SIZE_CAP:
        raise ConfigError(
            f"genome space of {size} entries exceeds the landscape cap "
            f"{LANDSCAPE_SIZE_CAP}"
        )
    rng = np.random.default_rng(seed)
    genomes = list(enumerate_genomes(spec))
    table: dict[str, float] = {}

    if rule == "separable":
        path_util = rng.uniform(0.25, 1.0, size=spec.num_paths)
        op_util = {}
        ch_util = {}
        rec_util = {}
        for p, path in enumerate(spec.paths):
            for l, layer in enumerate(path.layers):
                for o in range(layer.num_operators):
                    op_util[(p, l, o)] = rng.uniform(0.25, 1.0)
                for c in range(spec.num_channel_choices):
                    ch_util[(p, l, c)] = rng.uniform(0.25, 1.0)
                for r in range(len(layer.recursion_choices)):
                    rec_util[(p, l, r)] = rng.uniform(0.25, 1.0)
        for g in genomes:
            value = path_util[g.path_index]
            for l in range(len(g.operator_assignment)):
                value += op_util[(g.path_index, l, g.operator_assignment[l])]
                value += ch_util[(g.path_index, l, g.channel_assignment[l])]
                value += rec_util[(g.path_index, l, g.recursion_assignment[l])]
            table[g.to_record()] = float(value)

    elif rule == "monotone_plateau":
        plateau = max(0, spec.num_channel_choices - 2)
        slopes = {}
        base_util = {}
        for p, path in enumerate(spec.paths):
            for l, layer in enumerate(path.layers):
                slopes[(p, l)] = rng.uniform(0.5, 1.0)
                for o in range(layer.num_operators):
                    base_util[(p, l, o)] = rng.uniform(0.0, 0.1)
        for g in genomes:
            value = 0.5
            for l in range(len(g.channel_assignment)):
                value += slopes[(g.path_index, l)] * min(g.channel_assignment[l], plateau)
                value += base_util[(g.path_index, l, g.operator_assignment[l])]
            table[g.to_record()] = float(value)

    elif rule == "random_seeded":
        draws = rng.uniform(0.1, 1.0, size=len(genomes))
        for g, value in zip(genomes, draws):
            table[g.to_record()] = float(value)

    else:  # deceptive
        jitter = rng.uniform(0.0, 0.005, size=len(genomes))
        top = spec.num_channel_choices - 1
        narrow = max(1, spec.num_channel_choices // 2)
        for g, eps in zip(genomes, jitter):
            channels = g.channel_assignment
            if all(c == top for c in channels):
                base = 1.0
            elif all(c < narrow for c in channels):
                base = 0.93
            else:
                base = 0.45
            table[g.to_record()] = float(base + eps)

    return TabularLandscape(spec=spec, rule=rule, seed=seed, table=table)


class TabularOracle(FitnessOracle):
    """Oracle over a landscape table.

    The path-level score mirrors what full-supernet inference measures
    on a trained supernet: the mean fitness over all operator
    assignments of the path at maximal channels and depth.
    """

    def __init__(self, landscape: TabularLandscape):
        super().__init__(landscape.spec)
        self.landscape = landscape

    def _fitness(self, genome: ArchitectureGenome) -> float:
        try:
            return self.landscape.table[genome.to_record()]
        except KeyError:
            raise ConfigError(
                f"genome {genome.to_record()} is not in the landscape table"
            ) from None

    def _path_fitness(self, path_index: int) -> float:
        spec = self.spec
        path = spec.paths[path_index]
        template = maximal_genome(spec, path_index)
        values = []
        for ops in itertools.product(
            *(range(layer.num_operators) for layer in path.layers)
        ):
            g = ArchitectureGenome(
                path_index, tuple(ops), template.channel_assignment,
                template.recursion_assignment,
            )
            values.append(self.landscape.table[g.to_record()])
        return float(np.mean(values))


class GanOracle(FitnessOracle):
    """Oracle over a pretrained supernet: weight-inherited evaluation."""

    def __init__(self, weights, dataset, selection_mode: str = "top_k"):
        super().__init__(weights.spec)
        self.weights = weights
        self.dataset = dataset
        self.selection_mode = selection_mode

    def _fitness(self, genome: ArchitectureGenome) -> float:
        from .trainer import evaluate_genome

        return evaluate_genome(
            self.weights, genome, self.dataset, selection_mode=self.selection_mode
        )

    def _path_fitness(self, path_index: int) -> float:
        from .engine import Tensor
        from .network import mixed_view
        from .trainer import score_outputs

        view = mixed_view(self.weights, path_index)
        out = view(Tensor(self.dataset.val_x)).data
        return score_outputs(out, self.dataset)


def gan_fitness_adapter(weights, dataset, selection_mode: str = "top_k") -> GanOracle:
    """Uniform oracle interface over a pretrained supernet."""
    return GanOracle(weights, dataset, selection_mode=selection_mode)


# -- exhaustive reference search --------------------------------------------


@dataclass(frozen=True)
class OptimumResult:
    genome: ArchitectureGenome
    fitness: float
    cost: CostReport


def exhaustive_optimum(
    landscape: TabularLandscape,
    params_limit: int = NO_LIMIT,
    flops_limit: int = NO_LIMIT,
) -> OptimumResult:
    """Scan the whole table for the best feasible genome.

    Iterates genomes in canonical order and keeps the first maximum, so
    ties resolve to the lexicographically smallest genome.  When nothing
    is feasible, reports which constraint is impossible to satisfy (or
    that only their combination is).
    """
    best: OptimumResult | None = None
    any_params_ok = False
    any_flops_ok = False
    for genome in enumerate_genomes(landscape.spec):
        cost = genome_cost(landscape.spec, genome)
        params_ok = cost.params < params_limit
        flops_ok = cost.flops < flops_limit
        any_params_ok = any_params_ok or params_ok
        any_flops_ok = any_flops_ok or flops_ok
        if not (params_ok and flops_ok):
            continue
        fitness = landscape.fitness(genome)
        if best is None or fitness > best.fitness:
            best = OptimumResult(genome=genome, fitness=fitness, cost=cost)
    if best is None:
        if not any_params_ok:
            tightest = f"params limit {params_limit}"
        elif not any_flops_ok:
            tightest = f"flops limit {flops_limit}"
        else:
            tightest = (
                f"joint constraint (params < {params_limit}, flops < {flops_limit})"
            )
        raise InfeasibleError(f"no genome satisfies the {tightest}")
    return best


def feasible_fitness_values(
    landscape: TabularLandscape, params_limit: int, flops_limit: int
) -> list[float]:
    """Fitness of every feasible genome, descending."""
    values = []
    for genome in enumerate_genomes(landscape.spec):
        cost = genome_cost(landscape.spec, genome)
        if satisfies_constraints(cost, params_limit, flops_limit):
            values.append(landscape.fitness(genome))
    values.sort(reverse=True)
    return values


# -- shipped instances -------------------------------------------------------

SHIPPED_LANDSCAPE_SEEDS = {
    "separable": 101,
    "monotone_plateau": 202,
    "deceptive": 303,
    "evolution_bench": 404,
}


def shipped_landscape(name: str) -> TabularLandscape:
    """Named landscapes the verification suite runs against.

    ``separable``, ``monotone_plateau``, and ``deceptive`` cover the
    default toy spec; ``evolution_bench`` is the 256-configuration
    single-path space for channel-search benchmarks (monotone rule).
    """
    if name == "evolution_bench":
        return build_landscape(
            evolution_bench_spec(), "monotone_plateau", SHIPPED_LANDSCAPE_SEEDS[name]
        )
    if name in ("separable", "monotone_plateau", "deceptive"):
        return build_landscape(default_toy_spec(), name, SHIPPED_LANDSCAPE_SEEDS[name])
    raise ConfigError(
        f"unknown shipped landscape {name!r}; known: separable, monotone_plateau, "
        f"deceptive, evolution_bench"
    )


# -- landscape persistence ---------------------------------------------------


def export_landscape(landscape: TabularLandscape, path: str) -> None:
    """Write the table as tab-separated text: genome, fitness, params, flops."""
    lines = [
        f"# landscape v1\trule={landscape.rule}\tseed={landscape.seed}",
        "# genome\tfitness\tparams\tflops",
    ]
    for genome in enumerate_genomes(landscape.spec):
        record = genome.to_record()
        cost = genome_cost(landscape.spec, genome)
        lines.append(
            f"{record}\t{format_float(landscape.table[record])}"
            f"\t{cost.params}\t{cost.flops}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_landscape(spec: SupernetSpec, path: str) -> TabularLandscape:
    """Read a landscape export back; rule and seed come from the header."""
    rule = "random_seeded"
    seed = 0
    table: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# landscape"):
                for field in line.split("\t")[1:]:
                    key, _, value = field.partition("=")
                    if key == "rule":
                        rule = value
                    elif key == "seed":
                        seed = int(value)
                continue
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ConfigError(f"bad landscape row: {line!r}")
            table[parts[0]] = float(parts[1])
    return TabularLandscape(spec=spec, rule=rule, seed=seed, table=table)
