"""Built-in federation profiles.

Seven desk-scale federations covering distinct heterogeneity regimes:
globally dominant spurious correlation (gsc24, cmnist24), global class
imbalance (gci24, gci100), global attribute imbalance (gai25), a mixed
profile with a few class- and attribute-imbalanced clients among many
strongly correlated ones (waterbirds30), and a four-class correlated
federation (spur25).

Per-client matrices are explicit so that realised metrics are exact and
every downstream test is deterministic. Client types are interleaved so
client id carries no information about heterogeneity type.
"""

from __future__ import annotations

from .datagen import FederationRecipe, GeneratorSpec
from .metrics import InteractionMatrix


def _recipe(name, seed, pattern, reps, tail=(), test_per_group=50):
    mats = [InteractionMatrix.from_counts(m) for m in list(pattern) * reps + list(tail)]
    return FederationRecipe(
        name=name, client_matrices=mats, test_per_group=test_per_group, seed=seed
    )


def gsc24() -> tuple[FederationRecipe, GeneratorSpec]:
    """24 clients, 2x2: strong same-direction correlation in half the
    federation, mild class/attribute imbalance elsewhere."""
    sc = [[96, 4], [4, 96]]
    ci_a, ci_b = [[80, 80], [20, 20]], [[20, 20], [80, 80]]
    ai_a, ai_b = [[80, 20], [80, 20]], [[20, 80], [20, 80]]
    pattern = [sc, ci_a, sc, ai_a, sc, ci_b, sc, ai_b]
    return _recipe("gsc24", 101, pattern, 3), GeneratorSpec.default(2, 2)


def gci24() -> tuple[FederationRecipe, GeneratorSpec]:
    """24 clients, 2x2: one globally dominant class."""
    ci = [[96, 96], [4, 4]]
    sc_a, sc_b = [[80, 20], [20, 80]], [[20, 80], [80, 20]]
    ai_a, ai_b = [[80, 20], [80, 20]], [[20, 80], [20, 80]]
    pattern = [ci, sc_a, ci, ai_a, ci, sc_b, ci, ai_b]
    return _recipe("gci24", 102, pattern, 3), GeneratorSpec.default(2, 2)


def gai25() -> tuple[FederationRecipe, GeneratorSpec]:
    """25 clients, 2x2: one globally dominant attribute, alternating class
    skew, weak correlation."""
    a = [[144, 7], [33, 16]]
    b = [[33, 16], [144, 7]]
    c = [[7, 144], [16, 33]]
    return _recipe("gai25", 103, [a, b], 12, tail=[c]), GeneratorSpec.default(2, 2)


def waterbirds30() -> tuple[FederationRecipe, GeneratorSpec]:
    """30 clients, 2x2: 25 strongly correlated clients sharing the global
    majority groups, 3 class-imbalanced clients holding most of the
    counter-correlated mass, 2 attribute-imbalanced clients on the minority
    attribute. The task block is stronger here: the hardest group is scarce
    and must still be winnable inside a short training budget."""
    sc = [[153, 1], [1, 45]]
    ci = [[132, 33], [12, 23]]
    ai = [[1, 99], [1, 99]]
    mats = [sc] * 30
    for idx in (5, 15, 25):
        mats[idx] = ci
    for idx in (10, 20):
        mats[idx] = ai
    return (
        _recipe("waterbirds30", 104, mats, 1),
        GeneratorSpec.default(2, 2, class_mean_scale=2.0),
    )


def spur25() -> tuple[FederationRecipe, GeneratorSpec]:
    """25 clients, 4 classes x 2 attributes: correlation strength varies by
    client, marginals stay balanced."""
    base = [[45, 5], [45, 5], [5, 45], [5, 45]]
    strong = [[48, 2], [47, 3], [3, 47], [2, 48]]
    weak = [[40, 10], [40, 10], [10, 40], [10, 40]]
    pattern = [base, base, base, strong, weak]
    return _recipe("spur25", 105, pattern, 5, test_per_group=40), GeneratorSpec.default(4, 2)


def cmnist24() -> tuple[FederationRecipe, GeneratorSpec]:
    """gsc24 layout under a noisier task-intrinsic feature."""
    recipe, _ = gsc24()
    mats = [m.counts.tolist() for m in recipe.client_matrices]
    return (
        _recipe("cmnist24", 106, mats, 1),
        GeneratorSpec.default(2, 2, noise_std=1.5),
    )


def gci100() -> tuple[FederationRecipe, GeneratorSpec]:
    """100 clients, 2x2: half the federation skewed to one class."""
    ci = [[55, 55], [5, 5]]
    sc_a, sc_b = [[48, 12], [12, 48]], [[12, 48], [48, 12]]
    ai_a, ai_b = [[48, 12], [48, 12]], [[12, 48], [12, 48]]
    mats = []
    for i in range(25):
        sc = sc_a if i % 2 == 0 else sc_b
        ai = ai_a if i % 2 == 0 else ai_b
        mats.extend([ci, ci, sc, ai])
    return _recipe("gci100", 107, mats, 1), GeneratorSpec.default(2, 2)


BUILTIN = {
    "gsc24": gsc24,
    "gci24": gci24,
    "gai25": gai25,
    "waterbirds30": waterbirds30,
    "spur25": spur25,
    "cmnist24": cmnist24,
    "gci100": gci100,
}


def get(name: str) -> tuple[FederationRecipe, GeneratorSpec]:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown recipe {name!r}; built-ins: {sorted(BUILTIN)}") from None
