"""Shared helpers: compact search spaces, kept tiny so the suite stays fast."""

from cfsearch.space import SupernetSpec, spec_from_dict

OPERATOR_POOL = ["conv3x3", "res_block", "dws_block", "context_res_block"]


def tiny_spec_dict(
    n_paths: int = 1,
    n_layers: int = 2,
    n_operators: int = 2,
    channels: tuple[int, ...] = (2, 3),
    recursions: tuple[int, ...] = (1,),
    input_sites: int = 4,
    input_channels: int = 1,
) -> dict:
    ops = OPERATOR_POOL[:n_operators]
    return {
        "input_channels": input_channels,
        "input_sites": input_sites,
        "channel_choices": list(channels),
        "paths": [
            {
                "resolution_schedule": [1] * n_layers,
                "operators": [list(ops) for _ in range(n_layers)],
                "recursion_choices": [list(recursions) for _ in range(n_layers)],
            }
            for _ in range(n_paths)
        ],
    }


def build_spec(
    n_paths: int = 1,
    n_layers: int = 2,
    n_operators: int = 2,
    channels: tuple[int, ...] = (2, 3),
    recursions: tuple[int, ...] = (1,),
    input_sites: int = 4,
    input_channels: int = 1,
) -> SupernetSpec:
    return spec_from_dict(
        tiny_spec_dict(
            n_paths, n_layers, n_operators, channels, recursions, input_sites, input_channels
        )
    )
