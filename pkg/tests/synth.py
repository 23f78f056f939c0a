"""Synthetic near-duplicate image datasets written to disk for pipeline tests."""

from pathlib import Path

import numpy as np
from scipy import ndimage

from densefeat.core import resize_bilinear, save_image


def scene(shape, seed):
    """Random rectangles and discs over smooth noise; distinct per seed."""
    rng = np.random.default_rng(seed)
    h, w = shape
    img = ndimage.gaussian_filter(rng.random(shape), 3.0)
    img = (img - img.min()) / (np.ptp(img) + 1e-12) * 0.4
    yy, xx = np.indices(shape)
    for _ in range(12):
        v = rng.uniform(0.2, 0.6)
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, h - 8), rng.integers(0, w - 8)
            img[y0 : y0 + rng.integers(6, h // 3), x0 : x0 + rng.integers(6, w // 3)] += v
        else:
            cy, cx, r = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(4, min(h, w) / 5)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] += v
    return np.clip(img / img.max(), 0.0, 1.0)


def variants(img):
    """Original plus three near duplicates: a small crop, a brightness shift
    and a 2x upscaled copy."""
    h, w = img.shape
    dy, dx = max(1, h // 20), max(1, w // 20)
    return [
        img,
        img[dy : h - dy, dx : w - dx].copy(),
        np.clip(img + 0.08, 0.0, 1.0),
        resize_bilinear(img, (2 * h, 2 * w)),
    ]


def write_dataset(root, n_groups=4, copies=3, shape=(64, 80), seed=0, train_images=4):
    """Write images plus ``dataset.tsv`` and ``train.tsv`` manifests.

    Each group has ``copies`` images: the original followed by its first
    ``copies - 1`` variants.  Training images use seeds disjoint from the
    evaluation scenes.  Returns (dataset manifest, train manifest).
    """
    root = Path(root)
    (root / "img").mkdir(parents=True, exist_ok=True)
    lines = []
    for g in range(n_groups):
        for j, v in enumerate(variants(scene(shape, seed + g))[:copies]):
            name = f"img/g{g:02d}_{j}.png"
            save_image(root / name, v)
            lines.append(f"{name}\t{g}")
    (root / "dataset.tsv").write_text("# synthetic near duplicates\n" + "\n".join(lines) + "\n", encoding="utf-8")
    train = []
    for t in range(train_images):
        name = f"img/train{t:02d}.png"
        save_image(root / name, scene(shape, seed + 10_000 + t))
        train.append(name)
    (root / "train.tsv").write_text("\n".join(train) + "\n", encoding="utf-8")
    return root / "dataset.tsv", root / "train.tsv"


def acceptance_variants(img, target_area=150_000):
    """Three near duplicates of a large image: a small crop, a brightness
    shift and a copy downsampled to ``target_area`` pixels."""
    from densefeat.core import downsample_to_area

    h, w = img.shape
    dy, dx = h // 20, w // 20
    return [
        img[dy : h - dy, dx : w - dx].copy(),
        np.clip(img + 0.08, 0.0, 1.0),
        downsample_to_area(img, target_area),
    ]
