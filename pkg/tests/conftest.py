import numpy as np
import pytest

from emvkit.design import build_design
from emvkit.estimator import fit_linear
from emvkit.synth import GeneratorSpec, generate


@pytest.fixture(scope="session")
def small_panel():
    """Deterministic A=8, T=24 full rectangular noisy panel with truth."""
    return generate(GeneratorSpec(A=8, T=24, missing_pattern="rectangular", noise_sd=0.05, seed=11))


@pytest.fixture(scope="session")
def small_fit(small_panel):
    design = build_design(small_panel.grid)
    return design, fit_linear(design, small_panel.grid)


def random_grid_spec(rng: np.random.Generator) -> GeneratorSpec:
    """Random small grid with random missingness for property tests."""
    a = int(rng.integers(2, 13))
    t = int(rng.integers(max(4, a + 1), 25))
    p = float(rng.uniform(0.0, 0.3))
    return GeneratorSpec(
        A=a,
        T=t,
        missing_pattern="random",
        missing_p=p,
        noise_sd=0.05,
        seed=int(rng.integers(0, 2**31)),
    )
