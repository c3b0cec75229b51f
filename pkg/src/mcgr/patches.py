"""Overlapping patch extraction from large tiles.

Patches are laid out on a regular stride grid (stride = patch - overlap);
trailing remainder rows/columns that would not fit a full patch are dropped.
Names append a two-digit row-major patch index to the tile name, starting
at 01.
"""

from __future__ import annotations

from .image import ImageArray


def patch_grid(height: int, width: int, patch_size: int, overlap: int) -> list[tuple[int, int]]:
    """Row-major (row, col) origins of all full patches."""
    if patch_size > min(height, width):
        raise ValueError(f"patch_size {patch_size} exceeds tile {height}x{width}")
    if not 0 <= overlap < patch_size:
        raise ValueError(f"overlap {overlap} must satisfy 0 <= overlap < patch_size {patch_size}")
    stride = patch_size - overlap
    rows = range(0, height - patch_size + 1, stride)
    cols = range(0, width - patch_size + 1, stride)
    return [(r, c) for r in rows for c in cols]


def extract_patches(
    tile: ImageArray,
    tile_name: str,
    patch_size: int = 1000,
    overlap: int = 100,
) -> list[tuple[ImageArray, str]]:
    origins = patch_grid(tile.height, tile.width, patch_size, overlap)
    width = max(2, len(str(len(origins))))
    out = []
    for idx, (r, c) in enumerate(origins, start=1):
        crop = tile.data[:, r : r + patch_size, c : c + patch_size]
        name = f"{tile_name}_{idx:0{width}d}"
        out.append((ImageArray(crop, peak=tile.peak), name))
    return out
