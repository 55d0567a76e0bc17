"""Shared fixtures: randomized block/model generators and the certification suite."""

from dataclasses import dataclass

import numpy as np
import pytest

from gershlip.activations import default_catalog, get_activation
from gershlip.lmi import (
    LmiMatrix,
    assemble_lmi,
    check_constraints,
    eigenvalues_symmetric,
    gershgorin_discs,
)
from gershlip.param import BlockShape, MaterializedBlock, RawBlock, backward_pass, init_raw

ALL_NAMES = [s.name for s in default_catalog()]
FIRST_LAYER_NAMES = [s.name for s in default_catalog() if s.first_layer_ok]


def random_raw_block(seed, max_width=16, max_layers=4,
                     lipschitz_choices=(0.5, 1.0, 2.0)) -> RawBlock:
    """Randomized valid raw block: widths <= max_width, n <= max_layers,
    first-layer activation drawn from the admissible subset."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_layers + 1))
    d_x = int(rng.integers(1, max_width + 1))
    dims = [int(rng.integers(1, max_width + 1)) for _ in range(n - 1)] + [d_x]
    lip = float(rng.choice(lipschitz_choices))
    acts = [get_activation(rng.choice(FIRST_LAYER_NAMES))]
    acts += [get_activation(rng.choice(ALL_NAMES)) for _ in range(n - 1)]
    return init_raw(BlockShape(d_x=d_x, dims=tuple(dims)), lip, acts, seed=rng)


@dataclass
class CertifiedCase:
    seed: int
    raw: RawBlock
    block: MaterializedBlock
    lmi: LmiMatrix
    disc_lowers: np.ndarray
    disc_uppers: np.ndarray
    eigenvalues: np.ndarray
    constraint_checks: list


@pytest.fixture(scope="session")
def certified_suite() -> list[CertifiedCase]:
    """The 100 randomized configurations (seeds 0..99) with every artifact the
    certification criteria need, computed once per session."""
    cases = []
    for seed in range(100):
        raw = random_raw_block(seed)
        block = backward_pass(raw)
        lmi = assemble_lmi(block)
        discs = gershgorin_discs(lmi)
        cases.append(CertifiedCase(
            seed=seed,
            raw=raw,
            block=block,
            lmi=lmi,
            disc_lowers=np.array([d.lower for d in discs]),
            disc_uppers=np.array([d.upper for d in discs]),
            eigenvalues=eigenvalues_symmetric(lmi.M),
            constraint_checks=check_constraints(block),
        ))
    return cases
