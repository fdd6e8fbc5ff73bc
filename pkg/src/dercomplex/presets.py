"""Named voxel fixtures: unit cube, cube with a cavity, solid torus."""

from __future__ import annotations

import numpy as np

from .grid import DomainError, VoxelDomain, build_grid

PRESETS = ("cube", "cavity", "torus")


def preset_mask(name: str, shape) -> np.ndarray:
    """Occupancy mask of a preset on a grid of ``shape`` cells.

    ``cavity`` removes the central block of one third of each extent;
    ``torus`` removes the central half-by-half column through the full height.
    """
    nx, ny, nz = shape
    mask = np.ones(shape, dtype=bool)
    if name == "cube":
        return mask
    if name == "cavity":
        if any(s % 3 for s in shape):
            raise DomainError(f"cavity preset needs extents divisible by 3, got {shape}")
        mask[nx // 3: 2 * nx // 3, ny // 3: 2 * ny // 3, nz // 3: 2 * nz // 3] = False
        return mask
    if name == "torus":
        if nx % 4 or ny % 4:
            raise DomainError(f"torus preset needs x/y extents divisible by 4, got {shape}")
        mask[nx // 4: 3 * nx // 4, ny // 4: 3 * ny // 4, :] = False
        return mask
    raise DomainError(f"unknown preset {name!r}; choose from {PRESETS}")


def preset_domain(name: str, resolution: int = 1) -> VoxelDomain:
    """Preset on the unit bounding box (torus: 1 x 1 x 1/4).

    ``resolution`` counts cells per unit length for ``cube`` and refinement
    level for the fixed-shape ``cavity`` (6^3 base) and ``torus`` (8x8x2 base).
    """
    if name == "cube":
        n = int(resolution)
        return build_grid((n, n, n), "cube", h=1.0 / n)
    if name == "cavity":
        n = 6 * int(resolution)
        return build_grid((n, n, n), "cavity", h=1.0 / n)
    if name == "torus":
        r = int(resolution)
        return build_grid((8 * r, 8 * r, 2 * r), "torus", h=1.0 / (8 * r))
    raise DomainError(f"unknown preset {name!r}; choose from {PRESETS}")
