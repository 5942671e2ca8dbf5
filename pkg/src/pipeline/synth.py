"""
Synthetic Benchmark: planted two-stage slides for end-to-end checks

Each slide is a pink tissue ellipse on a white background. Stage controls
two signals the pipeline can pick up:
- spatial frequency of a sinusoidal stripe texture
- density and type mix of dark nuclei discs
"""

from dataclasses import replace
from typing import Optional, Tuple
import logging
import os

import numpy as np

from src.core.config import RunConfig, dump_config
from src.core.errors import InvalidArgumentError
from src.evaluation.manifest import Manifest, SlideRecord, Split, write_manifest
from src.features.nuclear import NucleiMap
from src.imaging.io import write_nuclei_map, write_rgb
from src.imaging.raster import RgbImage

logger = logging.getLogger(__name__)

TISSUE_RGB = np.array([232.0, 160.0, 200.0])
STRIPE_DEPTH = np.array([40.0, 50.0, 30.0])
NUCLEUS_RGB = np.array([70.0, 35.0, 110.0])
BACKGROUND_LEVEL = 245.0
BASE_PERIOD = 16.0
BASE_NUCLEUS_DENSITY = 0.002

# type codes: 1 neopla, 2 inflam, 3 connec
NEOPLASTIC, INFLAMMATORY, CONNECTIVE = 1, 2, 3


def stripe_period(stage: int) -> float:
    return BASE_PERIOD / (1 + 2 * stage)


def make_synthetic_slide(stage: int, rng: np.random.Generator, size: int = 128) -> Tuple[RgbImage, NucleiMap]:
    """
    Draw one synthetic slide.

    Args:
        stage: Class index 0..3; higher means finer stripes and more nuclei
        rng: Random generator (consumed deterministically)
        size: Image side in pixels

    Returns:
        (image, nuclei instance map with type codes)
    """
    if not 0 <= stage <= 3:
        raise InvalidArgumentError(f"stage must lie in 0..3, got {stage}")
    if size < 32:
        raise InvalidArgumentError(f"size must be >= 32, got {size}")

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = size / 2 + rng.uniform(-size / 32, size / 32, 2)
    ry = size * rng.uniform(0.32, 0.38)
    rx = size * rng.uniform(0.38, 0.42)
    tissue = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0

    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    along = xx * np.cos(theta) + yy * np.sin(theta)
    shade = 0.5 + 0.5 * np.sin(2 * np.pi * along / stripe_period(stage) + phase)

    pixels = np.full((size, size, 3), BACKGROUND_LEVEL) + rng.normal(0, 2, (size, size, 3))
    stained = TISSUE_RGB - shade[..., None] * STRIPE_DEPTH + rng.normal(0, 4, (size, size, 3))
    pixels[tissue] = stained[tissue]

    instances = np.zeros((size, size), dtype=np.int64)
    types = {}
    coords = np.argwhere(tissue)
    count = rng.poisson(BASE_NUCLEUS_DENSITY * (1 + 3 * stage) * len(coords))
    for instance_id in range(1, count + 1):
        r0, c0 = coords[rng.integers(len(coords))]
        radius = rng.integers(2, 4)
        disc = ((yy - r0) ** 2 + (xx - c0) ** 2 <= radius ** 2) & tissue
        instances[disc] = instance_id
        if stage > 0:
            types[instance_id] = NEOPLASTIC if rng.random() < 0.8 else INFLAMMATORY
        else:
            types[instance_id] = CONNECTIVE if rng.random() < 0.7 else INFLAMMATORY
    nucleus_pixels = instances > 0
    pixels[nucleus_pixels] = NUCLEUS_RGB + rng.normal(0, 5, (int(nucleus_pixels.sum()), 3))

    # later discs may cover earlier ones entirely; keep visible instances, renumbered 1..n
    present = np.unique(instances[nucleus_pixels])
    renumber = np.zeros(count + 1, dtype=np.int64)
    renumber[present] = np.arange(1, len(present) + 1)
    nuclei = NucleiMap(
        instances=renumber[instances],
        types={int(renumber[i]): types[int(i)] for i in present},
    )
    img = RgbImage(np.clip(np.floor(pixels + 0.5), 0, 255).astype(np.uint8))
    return img, nuclei


def benchmark_config(out_dir: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Defaults scaled to small synthetic images and a short training budget"""
    config = base or RunConfig()
    return replace(
        config,
        out_root=out_dir,
        tissue=replace(config.tissue, close_radius=2, open_radius=1, min_component_area=64),
        superpixel=replace(config.superpixel, seg_mag=1.0, ref_mag=1.0, target_side=16.0),
        coarsen=replace(config.coarsen, tau=0.9),
        features=replace(config.features, xi=0.99),
        train=replace(
            config.train, epochs=40, batch_size=8, hidden_dim=16, layers=2, heads=2, mlp_hidden=16, dropout=0.1
        ),
        search=replace(config.search, trials=2, instances=2, lr_range=(1e-3, 1e-2), wd_range=(1e-6, 1e-4)),
        explain=replace(config.explain, steps=32),
    )


def write_synthetic_benchmark(out_dir: str, n_slides: int = 200, seed: int = 0, size: int = 128) -> str:
    """
    Write images, nuclei maps, a manifest and a matching config.

    One slide per patient, balanced stages 0/1, survival shorter for
    stage 1, splits 60/20/20 by patient.

    Returns:
        Path of the written manifest
    """
    if n_slides < 1:
        raise InvalidArgumentError(f"n_slides must be >= 1, got {n_slides}")
    rng = np.random.default_rng(seed)
    for sub in ("images", "nuclei"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    stages = rng.permutation([i % 2 for i in range(n_slides)])
    order = rng.permutation(n_slides)
    n_train = int(round(0.6 * n_slides))
    n_val = int(round(0.2 * n_slides))
    split_of = {}
    for rank, index in enumerate(order):
        split_of[int(index)] = Split.TRAIN if rank < n_train else Split.VAL if rank < n_train + n_val else Split.TEST

    slides = []
    for i in range(n_slides):
        stage = int(stages[i])
        slide_id = f"slide_{i:04d}"
        img, nuclei = make_synthetic_slide(stage, rng, size)
        image_path = os.path.join(out_dir, "images", f"{slide_id}.png")
        nuclei_path = os.path.join(out_dir, "nuclei", f"{slide_id}.png")
        table_path = os.path.join(out_dir, "nuclei", f"{slide_id}.csv")
        write_rgb(image_path, img)
        write_nuclei_map(nuclei_path, table_path, nuclei)
        time = float(np.round(30.0 + rng.exponential(1500.0 / (1 + 2 * stage)), 1))
        slides.append(
            SlideRecord(
                slide_id=slide_id,
                patient_id=f"patient_{i:04d}",
                image_path=os.path.abspath(image_path),
                nuclei_path=os.path.abspath(nuclei_path),
                nuclei_table_path=os.path.abspath(table_path),
                stage=stage,
                time=time,
                event=bool(rng.random() < 0.75),
                split=split_of[i],
            )
        )

    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest_path, Manifest(slides=slides))
    dump_config(benchmark_config(os.path.abspath(out_dir)), os.path.join(out_dir, "config.json"))
    logger.info(f"Synthetic benchmark: {n_slides} slides written to {out_dir}")
    return manifest_path
