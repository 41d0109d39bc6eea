"""Seeded synthetic images and region masks for the demonstrator."""

import numpy as np

__all__ = ["synthetic_image", "rect_mask", "half_mask", "synthetic_corpus"]


def synthetic_image(rng, size=64):
    """Smooth background, a few textured shapes and mild sensor noise."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / size
    gx, gy = rng.uniform(-0.3, 0.3, 2)
    img = rng.uniform(0.3, 0.7) + gx * (xx - 0.5) + gy * (yy - 0.5)
    img = img + 0.05 * np.sin(2 * np.pi * (rng.uniform(1, 3) * xx + rng.uniform(1, 3) * yy))
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.3, 2)
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        freq = rng.uniform(4, 12)
        stripes = 0.08 * np.sin(2 * np.pi * freq * (xx * np.cos(cx * 6) + yy * np.sin(cy * 6)))
        img = np.where(inside, rng.uniform(0.1, 0.9) + stripes, img)
    img = img + rng.normal(0.0, 0.02, (h, w))
    return np.clip(img, 0.0, 1.0)


def rect_mask(rng, shape, masked_out, grid=8):
    """Rectangle of ones on the ``grid``-pixel lattice leaving at least ``masked_out`` zeros.

    Edges sit on block boundaries, like a region mask given at latent
    resolution; the rectangle is the largest of a random aspect that fits.
    """
    h, w = shape
    gh, gw = -(-h // grid), -(-w // grid)
    mask = np.zeros(shape, dtype=np.uint8)
    budget = (1.0 - masked_out) * h * w
    aspect = rng.uniform(0.6, 1.6)
    rh = int(min(gh, max(1, np.sqrt(budget * aspect) // grid)))
    while rh > 0:
        rw = int(min(gw, budget // (rh * grid * grid)))
        if rw >= 1:
            break
        rh -= 1
    if rh < 1 or budget < 1:
        return mask
    y0 = int(rng.integers(0, gh - rh + 1)) * grid
    x0 = int(rng.integers(0, gw - rw + 1)) * grid
    mask[y0:y0 + rh * grid, x0:x0 + rw * grid] = 1
    return mask


def half_mask(shape):
    """Left half 1, right half 0."""
    mask = np.zeros(shape, dtype=np.uint8)
    mask[:, : shape[1] // 2] = 1
    return mask


def synthetic_corpus(count=20, seed=0, size=64, masked_out=(0.25, 0.75)):
    """List of ``(name, image, mask)``; each mask leaves at least its drawn fraction out."""
    rng = np.random.default_rng(seed)
    lo, hi = masked_out
    items = []
    for i in range(count):
        img = synthetic_image(rng, size)
        frac = rng.uniform(lo, hi)
        items.append((f"synth{i:03d}", img, rect_mask(rng, img.shape, frac)))
    return items
