import numpy as np

from src.features.spectral import Field


def smooth_random_field(grid, rng, modes=4):
    """a few low cosines on a Gaussian envelope, positive, resolved and decaying"""
    values = np.zeros(grid.shape)
    for _ in range(modes):
        wave = rng.integers(-2, 3, size=grid.dim)
        argument = sum(2 * np.pi * k * x / grid.box for k, x in zip(wave, grid.coordinates))
        values = values + rng.normal() * np.cos(argument + rng.uniform(0, 2 * np.pi))
    envelope = Field.gaussian(grid, width=grid.box / 6).values
    return Field(grid, envelope * (1.5 + 0.5 * np.tanh(values)))
