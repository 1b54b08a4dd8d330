"""Hypothesis strategies built on the seeded generators of the driver."""

from hypothesis import strategies as st

from rlz.driver import GenConfig, GenerationExhausted, gen_metaterm, gen_type, gen_typed_term
from rlz.syntax import Level

seeds = st.integers(min_value=0, max_value=2**31 - 1)
levels = st.sampled_from([Level.ST, Level.F, Level.FOMEGA])


def metaterms(level: Level, depth: int = 4):
    return seeds.map(lambda s: gen_metaterm(GenConfig(seed=s, max_depth=depth, level=level)))


def types(level: Level, depth: int = 3):
    return seeds.map(lambda s: gen_type(GenConfig(seed=s, max_depth=depth, level=level)))


def _judgment(seed, level, depth, goal):
    try:
        return gen_typed_term(GenConfig(seed=seed, max_depth=depth, level=level), goal=goal)
    except GenerationExhausted:
        return None


def judgments(level: Level, depth: int = 4, goal=None):
    """Generated ``(ctx, env, term, type)``; ``goal`` pins the type."""
    return seeds.map(lambda s: _judgment(s, level, depth, goal)).filter(lambda j: j is not None)
